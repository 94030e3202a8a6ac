"""
Command-line entry point: ``condu <verb> [flags]``.

Exit codes: 0 on success, 1 on a domain error (``<ErrorName>: <message>``
on standard error), 2 on a usage error.
"""
import argparse
import logging
import sys
from typing import Callable, Dict, List, Optional, Tuple, Type

from pydantic import BaseModel, ValidationError

from app.models.requests import (
    DEFAULT_EPS,
    DEFAULT_MAX_STEPS,
    DecoupleRequest,
    InspectRequest,
    IterateRequest,
    RouteRequest,
    SessionRequest,
    SimulateRequest,
    StorageReportRequest,
    SweepKRequest,
    UnifyRequest,
)
from app.services.decouple_service import decouple_service
from app.services.inspect_service import inspect_service
from app.services.iterate_service import iterate_service
from app.services.route_service import route_service
from app.services.session_service import session_service
from app.services.simulate_service import simulate_service
from app.services.storage_report_service import storage_report_service
from app.services.sweep_k_service import sweep_k_service
from app.services.unify_service import unify_service
from lib.routing.router import DEFAULT_K
from lib.utils.enums import DType, ReportFormat
from lib.utils.errors import ConduError, IoError
from lib.utils.log_utils import configure_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DOMAIN_ERROR = 1
EXIT_USAGE_ERROR = 2

REPORT_CHOICES = [fmt.value for fmt in ReportFormat]


def _add_suite_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value benchmark config file")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--tasks", type=int)
    parser.add_argument("--dim", type=int)
    parser.add_argument("--classes", type=int)
    parser.add_argument("--spread", type=float)
    parser.add_argument("--mode", help="full or lora:<r>")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="condu", description="Unified delta fusion with task triggers.")
    parser.add_argument("--log-level", default="WARNING", help="logging level (default WARNING)")
    verbs = parser.add_subparsers(dest="verb", required=True)

    unify = verbs.add_parser("unify", help="fuse deltas into a session state")
    unify.add_argument("--base", required=True)
    unify.add_argument("--delta", dest="deltas", action="append", required=True)
    unify.add_argument("--out", required=True)

    decouple = verbs.add_parser("decouple", help="reconstruct one task from a session state")
    decouple.add_argument("--state", required=True)
    decouple.add_argument("--task", type=int, required=True, help="1-based task index")
    decouple.add_argument("--out", required=True)
    decouple.add_argument("--base", help="write the full task model instead of its delta")

    session = verbs.add_parser("session", help="add one task delta to a session state")
    session.add_argument("--state", help="previous state; omitted for the first session")
    session.add_argument("--base", required=True)
    session.add_argument("--delta", required=True)
    session.add_argument("--out", required=True)

    iterate = verbs.add_parser("iterate", help="fixed-set iteration over deltas")
    iterate.add_argument("--delta", dest="deltas", action="append", required=True)
    iterate.add_argument("--eps", type=float, default=DEFAULT_EPS)
    iterate.add_argument("--max-steps", type=int, default=DEFAULT_MAX_STEPS)
    iterate.add_argument("--report", choices=REPORT_CHOICES, default=ReportFormat.text.value)
    iterate.add_argument("--out")

    route = verbs.add_parser("route", help="route synthetic test samples through a session state")
    route.add_argument("--state", required=True)
    route.add_argument("--base", required=True)
    route.add_argument("--k", type=int, default=DEFAULT_K)
    route.add_argument("--out", required=True)
    _add_suite_flags(route)

    simulate = verbs.add_parser("simulate", help="run the synthetic continual-learning benchmark")
    simulate.add_argument("--k", type=int)
    simulate.add_argument("--report", choices=REPORT_CHOICES, default=ReportFormat.text.value)
    simulate.add_argument("--out", help="directory for accuracy.csv, summary.txt, state.cdt and base.cdt")
    _add_suite_flags(simulate)

    sweep = verbs.add_parser("sweep-k", help="re-evaluate routing for several K")
    sweep.add_argument("--k", type=int, action="append", default=[])
    sweep.add_argument("--report", choices=REPORT_CHOICES, default=ReportFormat.text.value)
    sweep.add_argument("--out")
    _add_suite_flags(sweep)

    storage = verbs.add_parser("storage-report", help="storage arithmetic for dense vs unified storage")
    storage.add_argument("--params", type=int, required=True)
    storage.add_argument("--dtype", choices=[dtype.value for dtype in DType], default=DType.r32.value)
    storage.add_argument("--tasks", type=int, required=True)
    storage.add_argument("--lora-params", type=int)
    storage.add_argument("--report", choices=REPORT_CHOICES, default=ReportFormat.text.value)
    storage.add_argument("--out")

    inspect = verbs.add_parser("inspect", help="summarize a container file")
    inspect.add_argument("path")
    return parser


COMMANDS: Dict[str, Tuple[Type[BaseModel], Callable]] = {
    "unify": (UnifyRequest, unify_service),
    "decouple": (DecoupleRequest, decouple_service),
    "session": (SessionRequest, session_service),
    "iterate": (IterateRequest, iterate_service),
    "route": (RouteRequest, route_service),
    "simulate": (SimulateRequest, simulate_service),
    "sweep-k": (SweepKRequest, sweep_k_service),
    "storage-report": (StorageReportRequest, storage_report_service),
    "inspect": (InspectRequest, inspect_service),
}


def dispatch(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE_ERROR

    try:
        configure_logging(args.log_level)
    except ValueError as e:
        sys.stderr.write(f"condu: error: {e}\n")
        return EXIT_USAGE_ERROR

    request_cls, service = COMMANDS[args.verb]
    values = {key: value for key, value in vars(args).items() if key not in ("verb", "log_level")}
    try:
        request = request_cls(**values)
    except ValidationError as e:
        sys.stderr.write(f"condu {args.verb}: error: {e}\n")
        return EXIT_USAGE_ERROR

    try:
        service(request)
    except ConduError as e:
        sys.stderr.write(f"{e.code}: {e.message}\n")
        return EXIT_DOMAIN_ERROR
    except OSError as e:
        sys.stderr.write(f"{IoError.code}: {e}\n")
        return EXIT_DOMAIN_ERROR
    return EXIT_OK


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
