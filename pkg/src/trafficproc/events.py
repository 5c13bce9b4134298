"""exBPAF state-transition events and their line wire format."""

from __future__ import annotations

import datetime as dt
import enum
from typing import NamedTuple, Optional

__all__ = [
    "LifecycleState",
    "CorrelationKey",
    "ExBpafEvent",
    "DecodeError",
    "validate_transition",
    "encode",
    "decode",
    "WIRE_KEYS",
]


class LifecycleState(str, enum.Enum):
    OPEN_RUNNING = "OPEN_RUNNING"
    CLOSED_COMPLETED = "CLOSED_COMPLETED"


OPEN = LifecycleState.OPEN_RUNNING
CLOSED = LifecycleState.CLOSED_COMPLETED

# Tokens accepted on decode. The long form is an alias for the completed state.
_STATE_TOKENS = {
    "OPEN_RUNNING": OPEN,
    "CLOSED_COMPLETED": CLOSED,
    "OPEN_CLOSED_COMPLETED": CLOSED,
}
NULL = "NULL"


class CorrelationKey(NamedTuple):
    registration: str
    journey_date: dt.date

    def __str__(self) -> str:
        return f"{self.registration}:{self.journey_date.isoformat()}"


class ExBpafEvent(NamedTuple):
    event_id: str
    timestamp: int  # ms since the UTC epoch, occurrence time at the source
    server_id: str
    process_definition_id: str
    process_instance_id: str
    process_name: str
    activity_definition_id: str
    activity_instance_id: str
    activity_name: str
    current_state: LifecycleState
    previous_state: Optional[LifecycleState]
    correlation: CorrelationKey


class DecodeError(ValueError):
    pass


def validate_transition(previous: LifecycleState | None, current: LifecycleState) -> bool:
    if previous is None:
        return current is OPEN
    return previous is OPEN and current is CLOSED


WIRE_KEYS = (
    "eventId",
    "timestamp",
    "serverId",
    "processDefinitionId",
    "processInstanceId",
    "processName",
    "activityDefinitionId",
    "activityInstanceId",
    "activityName",
    "currentState",
    "previousState",
    "corrReg",
    "corrDate",
)
_MANDATORY = frozenset({"eventId", "timestamp", "currentState", "previousState", "corrReg", "corrDate"})


def encode(event: ExBpafEvent) -> str:
    """One wire line, without the trailing newline."""
    if not validate_transition(event.previous_state, event.current_state):
        raise ValueError(f"illegal transition in event {event.event_id}")
    values = (
        event.event_id,
        str(event.timestamp),
        event.server_id,
        event.process_definition_id,
        event.process_instance_id,
        event.process_name,
        event.activity_definition_id,
        event.activity_instance_id,
        event.activity_name,
        event.current_state.value,
        NULL if event.previous_state is None else event.previous_state.value,
        event.correlation.registration,
        event.correlation.journey_date.isoformat(),
    )
    for v in values:
        if "|" in v or "\n" in v:
            raise ValueError(f"value {v!r} cannot be carried on the wire")
    return "|".join(f"{k}={v}" for k, v in zip(WIRE_KEYS, values))


def decode(record: str) -> ExBpafEvent:
    fields: dict[str, str] = {}
    for part in record.rstrip("\r\n").split("|"):
        key, sep, value = part.partition("=")
        if not sep:
            raise DecodeError(f"malformed pair {part!r}")
        fields[key] = value
    for key in WIRE_KEYS:
        if key not in fields:
            raise DecodeError(f"missing field {key}")
    for key in _MANDATORY:
        if not fields[key]:
            raise DecodeError(f"missing field {key}")

    ts = fields["timestamp"]
    if not ts.isdigit():
        raise DecodeError(f"malformed timestamp {ts!r}")
    try:
        current = _STATE_TOKENS[fields["currentState"]]
    except KeyError:
        raise DecodeError(f"unknown state token {fields['currentState']!r}") from None
    prev_token = fields["previousState"]
    if prev_token == NULL:
        previous = None
    else:
        try:
            previous = _STATE_TOKENS[prev_token]
        except KeyError:
            raise DecodeError(f"unknown state token {prev_token!r}") from None
    try:
        date = dt.date.fromisoformat(fields["corrDate"])
    except ValueError:
        raise DecodeError(f"malformed corrDate {fields['corrDate']!r}") from None

    return ExBpafEvent(
        event_id=fields["eventId"],
        timestamp=int(ts),
        server_id=fields["serverId"],
        process_definition_id=fields["processDefinitionId"],
        process_instance_id=fields["processInstanceId"],
        process_name=fields["processName"],
        activity_definition_id=fields["activityDefinitionId"],
        activity_instance_id=fields["activityInstanceId"],
        activity_name=fields["activityName"],
        current_state=current,
        previous_state=previous,
        correlation=CorrelationKey(fields["corrReg"], date),
    )
