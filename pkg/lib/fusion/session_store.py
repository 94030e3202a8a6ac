"""
SessionState <-> container.

Section order: session header, layout, unified values, one trigger per task,
one prototype slot per task.
"""
import logging
import struct

from lib.fusion.fusion_core import SessionState, UnifiedDelta
from lib.fusion.triggers import decode_trigger, encode_trigger
from lib.routing.prototypes import decode_prototypes, encode_prototypes
from lib.store import container as store
from lib.store.container import Container, Section, SectionReader
from lib.utils.enums import ContainerKind, SectionTag
from lib.utils.errors import CorruptSectionError

logger = logging.getLogger(__name__)

_SESSION_HEAD = struct.Struct("<I32s")


def session_to_container(state: SessionState) -> Container:
    header = Section(
        tag=SectionTag.SESSION_HEADER,
        payload=_SESSION_HEAD.pack(state.task_count, state.base_hash),
    )
    sections = [header, store.encode_layout(state.unified.vec.layout), store.encode_values(state.unified.vec)]
    sections.extend(encode_trigger(trigger) for trigger in state.triggers)
    sections.extend(
        encode_prototypes(prototypes, trigger.task_id)
        for prototypes, trigger in zip(state.prototypes, state.triggers)
    )
    return Container(kind=ContainerKind.SESSION_STATE, sections=tuple(sections))


def session_from_container(container: Container) -> SessionState:
    if container.kind != ContainerKind.SESSION_STATE:
        logger.error(f"Expected a SessionState container, got {container.kind.name}")
        raise CorruptSectionError(f"container holds {container.kind.name}, not SESSION_STATE", "session")

    reader = SectionReader(container.require(SectionTag.SESSION_HEADER).payload, "session header")
    task_count, base_hash = reader.take(_SESSION_HEAD.format)
    reader.finish()

    vec = store.flat_from_container(container)
    triggers = tuple(decode_trigger(section) for section in container.find_all(SectionTag.TRIGGER))
    prototypes = tuple(decode_prototypes(section) for section in container.find_all(SectionTag.PROTOTYPES))
    try:
        return SessionState(
            base_hash=base_hash,
            unified=UnifiedDelta(vec=vec, task_count=task_count),
            triggers=triggers,
            prototypes=prototypes,
        )
    except ValueError as e:
        raise CorruptSectionError(str(e), "session")


def save_session(state: SessionState, path: str) -> None:
    store.save(session_to_container(state), path)


def load_session(path: str) -> SessionState:
    return session_from_container(store.load(path))
