import logging
from typing import Any, Dict

from tabulate import tabulate

from app.models.requests import InspectRequest
from app.utils import emit_report
from lib.fusion.session_store import session_from_container
from lib.fusion.triggers import popcount
from lib.store.container import inspect_container, load
from lib.utils.enums import ContainerKind

logger = logging.getLogger(__name__)


def inspect_service(request: InspectRequest) -> Dict[str, Any]:
    """ Print a container's framing, layout and, for session states, its triggers. """
    loaded = load(request.path)
    summary = inspect_container(loaded)
    lines = [
        f"kind {summary['kind']}",
        f"version {summary['version']}",
        tabulate([[s["tag"], s["bytes"]] for s in summary["sections"]], headers=["section", "bytes"]),
    ]
    if "layout" in summary:
        lines.append(f"elements {summary['total_len']}")
        lines.append(tabulate([[name, "x".join(map(str, dims))] for name, dims in summary["layout"]],
                              headers=["tensor", "dims"]))

    if loaded.kind == ContainerKind.SESSION_STATE:
        state = session_from_container(loaded)
        summary["task_count"] = state.task_count
        summary["lambdas"] = [trigger.lam for trigger in state.triggers]
        summary["popcounts"] = [popcount(trigger.mask) for trigger in state.triggers]
        lines.append(f"tasks {state.task_count}")
        lines.append(tabulate(
            [
                [index + 1, f"{lam:.12g}", count, "yes" if prototypes is not None else "no"]
                for index, (lam, count, prototypes) in enumerate(
                    zip(summary["lambdas"], summary["popcounts"], state.prototypes)
                )
            ],
            headers=["task", "lambda", "popcount", "prototypes"],
        ))
    emit_report("\n".join(lines) + "\n")
    return summary
