"""Newline-delimited JSON wire protocol for live sessions.

One message per line, UTF-8. Every message is an object with a ``type``
field; unknown fields are ignored, unknown types are an E_PARSE error.
``parse_line`` and ``encode_message`` are inverses over the known field
set, which is what the round-trip suite checks.
"""

from __future__ import annotations

import json
from typing import Any, Callable

from .errors import ParseError

PROTOCOL_VERSION = 1

ERROR_CODES = ("E_PARSE", "E_VALIDATION", "E_STATE")
CONTROL_COMMANDS = ("pause", "resume", "step", "set_speed")

Validator = Callable[[str, Any], Any]


def _int(name: str, v: Any) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ParseError(f"field {name!r} must be an integer")
    return v


def _number(name: str, v: Any) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ParseError(f"field {name!r} must be a number")
    return float(v)


def _str(name: str, v: Any) -> str:
    if not isinstance(v, str):
        raise ParseError(f"field {name!r} must be a string")
    return v


def _bool(name: str, v: Any) -> bool:
    if not isinstance(v, bool):
        raise ParseError(f"field {name!r} must be a boolean")
    return v


def _obj(name: str, v: Any) -> dict:
    if not isinstance(v, dict):
        raise ParseError(f"field {name!r} must be an object")
    return v


def _str_or_null(name: str, v: Any):
    if v is None:
        return None
    return _str(name, v)


def _point(name: str, v: Any) -> dict:
    v = _obj(name, v)
    return {"x": _int(f"{name}.x", v.get("x")), "y": _int(f"{name}.y", v.get("y"))}


def _point_list(name: str, v: Any) -> list:
    if not isinstance(v, list):
        raise ParseError(f"field {name!r} must be a list")
    return [_point(f"{name}[{i}]", item) for i, item in enumerate(v)]


def _ghost_list(name: str, v: Any) -> list:
    if not isinstance(v, list):
        raise ParseError(f"field {name!r} must be a list")
    out = []
    for i, item in enumerate(v):
        item = _obj(f"{name}[{i}]", item)
        out.append(
            {
                "id": _str(f"{name}[{i}].id", item.get("id")),
                "kind": _str(f"{name}[{i}].kind", item.get("kind")),
                "alpha": _number(f"{name}[{i}].alpha", item.get("alpha")),
                "color": _str(f"{name}[{i}].color", item.get("color")),
                "source_episode": _int(f"{name}[{i}].source_episode", item.get("source_episode")),
                "path": _point_list(f"{name}[{i}].path", item.get("path")),
            }
        )
    return out


def _error_code(name: str, v: Any) -> str:
    v = _str(name, v)
    if v not in ERROR_CODES:
        raise ParseError(f"field {name!r} must be one of {ERROR_CODES}")
    return v


def _control_cmd(name: str, v: Any) -> str:
    v = _str(name, v)
    if v not in CONTROL_COMMANDS:
        raise ParseError(f"field {name!r} must be one of {CONTROL_COMMANDS}")
    return v


# type -> (required fields, optional fields)
MESSAGE_TYPES: dict[str, tuple[dict[str, Validator], dict[str, Validator]]] = {
    # server -> client
    "session_hello": (
        {
            "session_id": _str,
            "protocol_version": _int,
            "grid_config": _obj,
            "tick_rate_hz": _number,
        },
        {},
    ),
    "state_update": (
        {
            "tick": _int,
            "episode": _int,
            "agent": _point,
            "last_action": _str_or_null,
            "reward": _number,
            "cumulative_return": _number,
            "done": _bool,
            "done_reason": _str,
        },
        {},
    ),
    "ghost_update": ({"ghosts": _ghost_list}, {}),
    "metrics_update": (
        {
            "episode": _int,
            "greedy_return": _number,
            "epsilon": _number,
            "live_failure_mode": _str,
        },
        {},
    ),
    "disruption_ack": ({"id": _str, "applied_at_tick": _int}, {}),
    "label_ack": ({"trajectory_id": _str}, {}),
    "error": ({"code": _error_code, "message": _str}, {}),
    # client -> server
    "disruption": ({"kind": _str, "params": _obj, "author": _str}, {}),
    "label": ({"trajectory_id": _str, "failure_mode": _str, "rater_id": _str}, {}),
    "control": ({"cmd": _control_cmd}, {"value": _number}),
}


def _validate(msg: dict) -> dict:
    mtype = msg.get("type")
    if not isinstance(mtype, str) or mtype not in MESSAGE_TYPES:
        raise ParseError(f"unknown message type {mtype!r}")
    required, optional = MESSAGE_TYPES[mtype]
    out: dict = {"type": mtype}
    for name, check in required.items():
        if name not in msg:
            raise ParseError(f"message {mtype!r} missing field {name!r}")
        out[name] = check(name, msg[name])
    for name, check in optional.items():
        if name in msg and msg[name] is not None:
            out[name] = check(name, msg[name])
    return out  # unknown fields dropped


def parse_line(line: str) -> dict:
    """Parse one wire line into a normalized message dict."""
    try:
        data = json.loads(line)
    except (json.JSONDecodeError, RecursionError) as exc:
        raise ParseError(f"invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ParseError("message must be a JSON object")
    return _validate(data)


def encode_message(msg: dict) -> str:
    """Validate and serialize a message to one wire line (no newline)."""
    return json.dumps(_validate(msg), sort_keys=True, separators=(",", ":"))
