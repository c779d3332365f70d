from dotenv import load_dotenv
load_dotenv()

import logging
import sys
from typing import Annotated, Optional, Sequence

import click
import typer
from pydantic import ValidationError

from reclab.api.v1.approx_gap import approx_gap
from reclab.api.v1.cluster_count import cluster_count
from reclab.api.v1.entropy import entropy
from reclab.api.v1.mixing import mixing
from reclab.api.v1.period_scan import period_scan
from reclab.api.v1.poisson_check import poisson_check
from reclab.api.v1.replay import replay
from reclab.api.v1.schema import schema
from reclab.api.v1.stein_bound import stein_bound
from reclab.core.config import config
from reclab.core.errors import BudgetExceededError, InvalidInputError, ReclabError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INVALID = 2
EXIT_BUDGET = 3

app = typer.Typer(
    name="reclab",
    help="Return-time statistics lab: hitting laws, Bowen balls and Poisson approximation.",
    no_args_is_help=True,
    add_completion=False,
    pretty_exceptions_enable=False,
)


@app.callback()
def main_options(
    ctx: typer.Context,
    verbose: Annotated[bool, typer.Option("--verbose", "-v", help="log run milestones")] = False,
    progress: Annotated[bool, typer.Option("--progress", help="show progress bars")] = False,
) -> None:
    level = logging.INFO if verbose else getattr(logging, str(config.LOG_LEVEL).upper(), logging.WARNING)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    logging.getLogger("reclab").setLevel(level)
    obj = ctx.ensure_object(dict)
    obj["progress"] = progress


app.command("poisson-check")(poisson_check)
app.command("period-scan")(period_scan)
app.command("entropy")(entropy)
app.command("stein-bound")(stein_bound)
app.command("approx-gap")(approx_gap)
app.command("cluster-count")(cluster_count)
app.command("mixing")(mixing)
app.command("replay")(replay)
app.command("schema")(schema)


def _validation_message(e: ValidationError) -> str:
    first = e.errors()[0]
    message = str(first.get("msg", e))
    return message.removeprefix("Value error, ")


def _fail(message: str, status: int) -> int:
    typer.echo(f"error: {message}", err=True)
    return status


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand; returns 0, 2 on invalid input, 3 on an exceeded budget."""
    argv = list(sys.argv[1:] if argv is None else argv)
    command = typer.main.get_command(app)
    try:
        result = command.main(args=argv, prog_name="reclab", standalone_mode=False, obj={"argv": argv})
    except click.UsageError as e:
        return _fail(e.format_message(), EXIT_INVALID)
    except click.Abort:
        return _fail("aborted", EXIT_FAILURE)
    except ValidationError as e:
        return _fail(_validation_message(e), EXIT_INVALID)
    except BudgetExceededError as e:
        return _fail(str(e), EXIT_BUDGET)
    except InvalidInputError as e:
        return _fail(str(e), EXIT_INVALID)
    except ReclabError as e:
        logger.debug("run failed", exc_info=True)
        return _fail(str(e), EXIT_FAILURE)
    return result if isinstance(result, int) else EXIT_OK


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
