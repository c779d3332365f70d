"""replay: re-run the argv recorded in a manifest."""
import logging
from pathlib import Path
from typing import Annotated, Optional

import typer

from reclab.db.artifact_repo import load_manifest

logger = logging.getLogger(__name__)


def _without_out(argv: list[str]) -> list[str]:
    out, skip = [], False
    for arg in argv:
        if skip:
            skip = False
            continue
        if arg == "--out":
            skip = True
            continue
        if arg.startswith("--out="):
            continue
        out.append(arg)
    return out


def replay(
    ctx: typer.Context,
    manifest: Annotated[Path, typer.Argument(help="manifest.json or the run directory holding it")],
    out: Annotated[Optional[Path], typer.Option(help="write the outputs here instead")] = None,
) -> int:
    """Reproduce a run from its manifest; outputs are byte-identical."""
    recorded = load_manifest(manifest)
    argv = list(recorded.argv)
    if out is not None:
        argv = _without_out(argv) + ["--out", str(out)]
    logger.info("replaying %s: %s", recorded.command, " ".join(argv))
    root = ctx.find_root()
    return root.command.main(args=argv, prog_name=root.info_name, standalone_mode=False, obj={"argv": argv}) or 0
