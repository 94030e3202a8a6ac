import logging
import sys
from typing import Optional

from lib.fusion.fusion_core import DeltaModel, delta_from
from lib.store import container as store
from lib.store.tensor_store import FlatVector, require_same_layout
from lib.utils.enums import ContainerKind
from lib.utils.errors import CorruptSectionError
from lib.utils.log_utils import log_error
from lib.utils.utilities import write_text_file

logger = logging.getLogger(__name__)


def emit_report(text: str, out: Optional[str] = None) -> None:
    """Write a report to ``out`` when given, otherwise to standard output."""
    if out:
        write_text_file(text, out)
    else:
        sys.stdout.write(text)


def load_task_delta(path: str, base: FlatVector, task_id: int) -> DeltaModel:
    """
    Read a delta container, or a fine-tuned model container which is turned
    into a delta against ``base``.
    """
    loaded = store.load(path)
    vec = store.flat_from_container(loaded)
    require_same_layout(base, vec, path)
    if loaded.kind == ContainerKind.DELTA_MODEL:
        return DeltaModel(vec=vec, task_id=task_id)
    if loaded.kind == ContainerKind.BASE_MODEL:
        logger.info(f"{path} holds a full model; using its offset from the base")
        return delta_from(vec, base, task_id)
    log_error(CorruptSectionError, f"expected a delta or model container, got {loaded.kind.name}", path)
