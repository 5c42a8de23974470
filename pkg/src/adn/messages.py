"""Wire format for the master-worker round protocol.

Every message is a 16-byte header followed by a little-endian float64
payload:

    magic 'ADNB' (4) | version u16 | msg_type u16 | aux u32 | payload_len u32

aux carries the part id on worker-originated messages and the round index on
master-originated ones.  A worker update is the only d-dependent message:
3 scalars plus the dense length-d image, 16 + 24 + 8d bytes in total.
Rejected-round broadcasts carry control scalars only, no image payload.
"""

import struct

import numpy as np

from .errors import MalformedMessage

MAGIC = b"ADNB"
VERSION = 1
HEADER = struct.Struct("<4sHHII")
HEADER_SIZE = HEADER.size  # 16

TYPE_WORKER_UPDATE = 1
TYPE_MASTER_ACCEPT = 2
TYPE_MASTER_REJECT = 3
TYPE_PROBE_REQUEST = 4
TYPE_PROBE_REPLY = 5


class WorkerToMaster:
    """Per-round worker payload: the block image of the update plus the
    scalars the master needs to evaluate objective and model remotely."""

    __slots__ = ("part_id", "delta_v", "g_sum_new", "local_model_value",
                 "local_decrease")

    def __init__(self, part_id, delta_v, g_sum_new, local_model_value,
                 local_decrease):
        self.part_id = int(part_id)
        self.delta_v = np.asarray(delta_v, dtype=np.float64)
        self.g_sum_new = float(g_sum_new)
        self.local_model_value = float(local_model_value)
        self.local_decrease = float(local_decrease)

    def __eq__(self, other):
        return (isinstance(other, WorkerToMaster)
                and self.part_id == other.part_id
                and self.g_sum_new == other.g_sum_new
                and self.local_model_value == other.local_model_value
                and self.local_decrease == other.local_decrease
                and np.array_equal(self.delta_v, other.delta_v))


class MasterToWorker:
    """Per-round broadcast: acceptance, next sigma, the step scale (1 except
    under line search) and, only when accepted, the aggregated image."""

    __slots__ = ("accepted", "delta_v_total", "sigma_next", "round_index",
                 "step_scale")

    def __init__(self, accepted, delta_v_total, sigma_next, round_index,
                 step_scale=1.0):
        self.accepted = bool(accepted)
        self.delta_v_total = (None if delta_v_total is None
                              else np.asarray(delta_v_total, dtype=np.float64))
        self.sigma_next = float(sigma_next)
        self.round_index = int(round_index)
        self.step_scale = float(step_scale)

    def __eq__(self, other):
        if not isinstance(other, MasterToWorker):
            return False
        if (self.accepted, self.sigma_next, self.round_index, self.step_scale) != \
                (other.accepted, other.sigma_next, other.round_index, other.step_scale):
            return False
        if (self.delta_v_total is None) != (other.delta_v_total is None):
            return False
        return self.delta_v_total is None or np.array_equal(
            self.delta_v_total, other.delta_v_total)


class ProbeRequest:
    """Line-search probe: evaluate the g-sum at a candidate step scale."""

    __slots__ = ("round_index", "beta")

    def __init__(self, round_index, beta):
        self.round_index = int(round_index)
        self.beta = float(beta)

    def __eq__(self, other):
        return (isinstance(other, ProbeRequest)
                and (self.round_index, self.beta) == (other.round_index, other.beta))


class ProbeReply:
    """Scalar answer to a probe."""

    __slots__ = ("part_id", "value")

    def __init__(self, part_id, value):
        self.part_id = int(part_id)
        self.value = float(value)

    def __eq__(self, other):
        return (isinstance(other, ProbeReply)
                and (self.part_id, self.value) == (other.part_id, other.value))


def _pack(msg_type, aux, payload):
    return HEADER.pack(MAGIC, VERSION, msg_type, aux, len(payload)) + payload


def serialize_message(msg):
    """Encode a message to bytes (little-endian float64 payload)."""
    if isinstance(msg, WorkerToMaster):
        payload = struct.pack("<3d", msg.g_sum_new, msg.local_model_value,
                              msg.local_decrease) + msg.delta_v.tobytes()
        return _pack(TYPE_WORKER_UPDATE, msg.part_id, payload)
    if isinstance(msg, MasterToWorker):
        payload = struct.pack("<2d", msg.sigma_next, msg.step_scale)
        if msg.accepted:
            if msg.delta_v_total is None:
                raise MalformedMessage("accepted broadcast needs the image")
            return _pack(TYPE_MASTER_ACCEPT, msg.round_index,
                         payload + msg.delta_v_total.tobytes())
        return _pack(TYPE_MASTER_REJECT, msg.round_index, payload)
    if isinstance(msg, ProbeRequest):
        return _pack(TYPE_PROBE_REQUEST, msg.round_index,
                     struct.pack("<d", msg.beta))
    if isinstance(msg, ProbeReply):
        return _pack(TYPE_PROBE_REPLY, msg.part_id,
                     struct.pack("<d", msg.value))
    raise MalformedMessage(f"cannot serialize {type(msg).__name__}")


def _floats(payload):
    return np.frombuffer(payload, dtype="<f8")


def deserialize_message(buf):
    """Decode bytes back to a message, validating the frame."""
    if len(buf) < HEADER_SIZE:
        raise MalformedMessage(f"truncated header: {len(buf)} bytes")
    magic, version, msg_type, aux, payload_len = HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise MalformedMessage(f"bad magic {magic!r}")
    if version != VERSION:
        raise MalformedMessage(f"unsupported version {version}")
    if len(buf) != HEADER_SIZE + payload_len:
        raise MalformedMessage(
            f"length mismatch: header says {payload_len}, have {len(buf) - HEADER_SIZE}")
    payload = buf[HEADER_SIZE:]
    if payload_len % 8 != 0:
        raise MalformedMessage("payload is not a whole number of float64s")
    if msg_type == TYPE_WORKER_UPDATE:
        if payload_len < 24:
            raise MalformedMessage("worker update payload too short")
        vals = _floats(payload)
        return WorkerToMaster(aux, vals[3:].copy(), vals[0], vals[1], vals[2])
    if msg_type in (TYPE_MASTER_ACCEPT, TYPE_MASTER_REJECT):
        if payload_len < 16:
            raise MalformedMessage("broadcast payload too short")
        vals = _floats(payload)
        accepted = msg_type == TYPE_MASTER_ACCEPT
        if not accepted and payload_len != 16:
            raise MalformedMessage("rejected broadcast must carry scalars only")
        image = vals[2:].copy() if accepted else None
        return MasterToWorker(accepted, image, vals[0], aux, vals[1])
    if msg_type == TYPE_PROBE_REQUEST:
        if payload_len != 8:
            raise MalformedMessage("probe request carries exactly one scalar")
        return ProbeRequest(aux, _floats(payload)[0])
    if msg_type == TYPE_PROBE_REPLY:
        if payload_len != 8:
            raise MalformedMessage("probe reply carries exactly one scalar")
        return ProbeReply(aux, _floats(payload)[0])
    raise MalformedMessage(f"unknown message type {msg_type}")


def message_size_worker_update(d):
    """Serialized size of a worker update for a length-d shared vector."""
    return HEADER_SIZE + 24 + 8 * d
