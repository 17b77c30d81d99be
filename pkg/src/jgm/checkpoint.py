"""Binary checkpoint format for trained score networks.

Layout (all little-endian)::

    8 bytes   magic b"JGMCKPT1"
    u32 x 3   depth, width, channel count
    u32       number of noise levels L
    f64 x L   noise levels, decreasing
    u32       boundary-rule tag
    f64 x P   parameter vector, P implied by (depth, width, channels)
"""

import hashlib
import struct

import numpy as np
import torch

from .gradients import BoundaryRule
from .schedule import NoiseSchedule
from .score import ConvScoreNet, NetScoreModel

MAGIC = b"JGMCKPT1"


class CheckpointError(ValueError):
    pass


def write_checkpoint(path, model):
    net = model.net
    sigmas = model.schedule.sigmas
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<3I", net.depth, net.width, net.channels))
        fh.write(struct.pack("<I", len(sigmas)))
        fh.write(np.asarray(sigmas, dtype="<f8").tobytes())
        fh.write(struct.pack("<I", int(model.boundary_rule)))
        fh.write(model.get_params().astype("<f8").tobytes())


def read_checkpoint(path, expected_channels=9, dtype=torch.float32):
    """Load a :class:`NetScoreModel`.

    Raises :class:`CheckpointError` on a bad magic string, a channel count
    other than ``expected_channels`` (pass ``None`` to accept any), an
    unknown boundary rule, or a truncated parameter block.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic {raw[:8]!r})")
    pos = 8
    try:
        depth, width, channels, n_levels = struct.unpack_from("<4I", raw, pos)
        pos += 16
        sigmas = np.frombuffer(raw, dtype="<f8", count=n_levels, offset=pos)
        pos += 8 * n_levels
        (rule,) = struct.unpack_from("<I", raw, pos)
        pos += 4
    except (struct.error, ValueError) as exc:
        raise CheckpointError(f"{path}: truncated header") from exc
    if expected_channels is not None and channels != expected_channels:
        raise CheckpointError(
            f"{path}: channel count {channels}, expected {expected_channels}"
        )
    try:
        rule = BoundaryRule(rule)
    except ValueError:
        raise CheckpointError(f"{path}: unknown boundary rule tag {rule}") from None

    net = ConvScoreNet(channels, width, depth)
    n_params = net.n_params()
    if len(raw) - pos != 8 * n_params:
        raise CheckpointError(
            f"{path}: parameter block holds {(len(raw) - pos) / 8:g} values, expected {n_params}"
        )
    theta = np.frombuffer(raw, dtype="<f8", count=n_params, offset=pos)
    model = NetScoreModel(net, NoiseSchedule(tuple(sigmas)), dtype=dtype, boundary_rule=rule)
    model.set_params(theta)
    return model


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
