# uav/messages.py
"""
Bus payload codecs.

/cmd_vel: roll, pitch, yaw, vertical as four little-endian float64.
/UAV/navdata: x, y, z, heading, v_lateral, v_forward, v_vertical as
little-endian float64 plus one flying byte. sim_time travels on the envelope.
/UAV/front/image_raw: binary PPM. Signal topics carry no payload.
"""

import struct

import numpy as np

from core.errors import DecodeError
from core.pose import DroneState
from dataset.image_io import image_from_bytes, image_to_bytes
from .visual_servo import ControlCommand

_COMMAND = struct.Struct("<4d")
_NAVDATA = struct.Struct("<7dB")

SIGNAL = b""


def encode_command(cmd: ControlCommand) -> bytes:
    return _COMMAND.pack(cmd.roll, cmd.pitch, cmd.yaw, cmd.vertical)


def decode_command(payload: bytes) -> ControlCommand:
    if len(payload) != _COMMAND.size:
        raise DecodeError(f"command payload must be {_COMMAND.size} bytes, got {len(payload)}")
    values = _COMMAND.unpack(payload)
    if not all(np.isfinite(values)):
        raise DecodeError(f"non-finite command {values}")
    return ControlCommand(*values).clamped()


def encode_navdata(state: DroneState) -> bytes:
    return _NAVDATA.pack(state.x, state.y, state.z, state.heading, state.v_lateral,
                         state.v_forward, state.v_vertical, 1 if state.flying else 0)


def decode_navdata(payload: bytes, sim_time: float = 0.0) -> DroneState:
    if len(payload) != _NAVDATA.size:
        raise DecodeError(f"navdata payload must be {_NAVDATA.size} bytes, got {len(payload)}")
    *values, flying = _NAVDATA.unpack(payload)
    if flying not in (0, 1):
        raise DecodeError(f"flying flag must be 0 or 1, got {flying}")
    return DroneState(*values, flying=bool(flying), sim_time=sim_time)


def encode_frame(image: np.ndarray) -> bytes:
    return image_to_bytes(image, "PPM")


def decode_frame(payload: bytes) -> np.ndarray:
    return image_from_bytes(payload)
