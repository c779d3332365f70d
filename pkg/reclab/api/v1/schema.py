"""schema: print the JSON schema of a summary document."""
from typing import Annotated

import orjson
import typer

from reclab.core.errors import InvalidInputError
from reclab.models.schemas import SUMMARY_MODELS


def schema(
    name: Annotated[str, typer.Argument(help="a command name, or 'manifest'")],
) -> None:
    """The pydantic model of each JSON output is its shipped schema."""
    model = SUMMARY_MODELS.get(name)
    if model is None:
        raise InvalidInputError(f"no schema named {name!r} (choose from {', '.join(sorted(SUMMARY_MODELS))})")
    typer.echo(orjson.dumps(model.model_json_schema(), option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS).decode())
