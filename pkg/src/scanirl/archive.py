"""NMIR binary archives for datasets and checkpoints.

Every file starts with the same header, all little-endian::

    magic     4 bytes   b"NMIR"
    version   u32
    kind      u8        0 dataset, 1 generator checkpoint, 2 policy checkpoint
    scan      4 x u32   height, width, channels, levels
    seed      u64       creation seed
    meta      u32 length + UTF-8 JSON (environment spec or model config)

A dataset continues with a u64 record count and then, per record: the
observation as f64 values, the scan as one byte per cell, the action as u16,
the next observation, the next scan and a u8 done flag.

A checkpoint continues with a tensor table (u32 count; per tensor a u16
name length, the UTF-8 name, u8 rank, u64 dims and raw f64 data), then a u8
flag for optimizer state. When set, it holds u64 step, f64 lr, beta1, beta2,
eps and a second tensor table with the first and second moments.
"""
import json
import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

from .envs import EnvSpec
from .errors import CorruptionError, FormatError
from .expert import Dataset
from .numerics import OptState, ParamStore
from .scans import ScanConfig

MAGIC = b"NMIR"
VERSION = 1
KIND_DATASET, KIND_GENERATOR, KIND_POLICY = 0, 1, 2
KIND_NAMES = {KIND_DATASET: "dataset", KIND_GENERATOR: "generator_ckpt", KIND_POLICY: "policy_ckpt"}


class _Reader:
    def __init__(self, data):
        self.data = data
        self.offset = 0

    def take(self, n, what):
        if n < 0 or self.offset + n > len(self.data):
            raise CorruptionError(f"truncated file while reading {what}: need {n} bytes, "
                                  f"{len(self.data) - self.offset} left", self.offset)
        chunk = self.data[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def unpack(self, fmt, what):
        return struct.unpack("<" + fmt, self.take(struct.calcsize("<" + fmt), what))

    def array(self, dtype, count, what):
        dtype = np.dtype(dtype).newbyteorder("<")
        return np.frombuffer(self.take(count * dtype.itemsize, what), dtype=dtype).astype(dtype.newbyteorder("="))

    def finish(self):
        if self.offset != len(self.data):
            raise CorruptionError(f"{len(self.data) - self.offset} unexpected trailing bytes", self.offset)


def _header(kind, scan, seed, meta):
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    return b"".join([
        MAGIC,
        struct.pack("<IB", VERSION, kind),
        struct.pack("<4I", scan.height, scan.width, scan.channels, scan.levels),
        struct.pack("<Q", int(seed)),
        struct.pack("<I", len(meta_bytes)), meta_bytes,
    ])


def _read_header(reader, expected_kind=None):
    magic = reader.take(4, "magic")
    if magic != MAGIC:
        raise FormatError(f"not an NMIR archive: magic {magic!r}, expected {MAGIC!r}")
    (version,) = reader.unpack("I", "version")
    if version != VERSION:
        raise FormatError(f"unsupported NMIR version {version}; this build reads version {VERSION}")
    (kind,) = reader.unpack("B", "payload kind")
    if kind not in KIND_NAMES:
        raise FormatError(f"unknown payload kind {kind}")
    if expected_kind is not None and kind != expected_kind:
        raise FormatError(f"archive holds a {KIND_NAMES[kind]}, expected a {KIND_NAMES[expected_kind]}")
    h, w, c, k = reader.unpack("4I", "scan config")
    (seed,) = reader.unpack("Q", "seed")
    (n_meta,) = reader.unpack("I", "meta length")
    raw = reader.take(n_meta, "meta")
    try:
        meta = json.loads(raw.decode("utf-8"))
        scan = ScanConfig(h, w, c, k)
    except (ValueError, UnicodeDecodeError) as exc:
        raise CorruptionError(f"bad header metadata: {exc}", reader.offset) from None
    return kind, scan, seed, meta


def read_header(path):
    """Header fields of an archive, without reading its payload."""
    kind, scan, seed, meta = _read_header(_Reader(Path(path).read_bytes()))
    return {"kind": KIND_NAMES[kind], "scan": scan, "seed": seed, "meta": meta}


# ---------------------------------------------------------------------------
# datasets


def dataset_bytes(ds):
    n = len(ds)
    obs_dim = ds.obs.shape[1]
    meta = {"env_spec": ds.env_spec.to_dict(), "obs_dim": obs_dim}
    parts = [_header(KIND_DATASET, ds.scan_config, ds.seed, meta), struct.pack("<Q", n)]
    obs = ds.obs.astype("<f8")
    obs_next = ds.obs_next.astype("<f8")
    scans = ds.scans.reshape(n, -1).astype(np.uint8)
    scans_next = ds.scans_next.reshape(n, -1).astype(np.uint8)
    for i in range(n):
        parts += [obs[i].tobytes(), scans[i].tobytes(), struct.pack("<H", int(ds.actions[i])),
                  obs_next[i].tobytes(), scans_next[i].tobytes(), struct.pack("<B", bool(ds.done[i]))]
    return b"".join(parts)


def _write(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)


def save_dataset(ds, path):
    _write(path, dataset_bytes(ds))


def dataset_from_bytes(data):
    r = _Reader(data)
    _, scan, seed, meta = _read_header(r, KIND_DATASET)
    try:
        spec = EnvSpec.from_dict(meta["env_spec"])
        obs_dim = int(meta["obs_dim"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptionError(f"bad dataset metadata: {exc}", r.offset) from None
    (n,) = r.unpack("Q", "record count")
    cells = scan.n_cells
    record_size = 2 * 8 * obs_dim + 2 * cells + 2 + 1
    if n * record_size > len(data) - r.offset:
        raise CorruptionError(f"{n} records need {n * record_size} bytes, "
                              f"{len(data) - r.offset} left", r.offset)
    obs = np.empty((n, obs_dim))
    obs_next = np.empty((n, obs_dim))
    scans = np.empty((n, cells), dtype=np.uint8)
    scans_next = np.empty((n, cells), dtype=np.uint8)
    actions = np.empty(n, dtype=np.int64)
    done = np.empty(n, dtype=bool)
    for i in range(n):
        obs[i] = r.array("f8", obs_dim, "observation")
        scans[i] = r.array("u1", cells, "scan")
        (actions[i],) = r.unpack("H", "action")
        obs_next[i] = r.array("f8", obs_dim, "next observation")
        scans_next[i] = r.array("u1", cells, "next scan")
        (flag,) = r.unpack("B", "done flag")
        done[i] = bool(flag)
    r.finish()
    return Dataset(obs, scans.reshape((n,) + scan.shape), actions, obs_next,
                   scans_next.reshape((n,) + scan.shape), done, scan, spec, seed)


def load_dataset(path):
    return dataset_from_bytes(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# checkpoints


def _tensor_table(tensors):
    parts = [struct.pack("<I", len(tensors))]
    for name, value in tensors.items():
        value = np.asarray(value, dtype="<f8")
        raw = name.encode("utf-8")
        parts += [struct.pack("<H", len(raw)), raw, struct.pack("<B", value.ndim),
                  struct.pack(f"<{value.ndim}Q", *value.shape), value.tobytes()]
    return b"".join(parts)


def _read_tensor_table(r):
    (count,) = r.unpack("I", "tensor count")
    out = OrderedDict()
    for _ in range(count):
        (n_name,) = r.unpack("H", "tensor name length")
        try:
            name = r.take(n_name, "tensor name").decode("utf-8")
        except UnicodeDecodeError:
            raise CorruptionError("tensor name is not UTF-8", r.offset) from None
        (ndim,) = r.unpack("B", "tensor rank")
        shape = r.unpack(f"{ndim}Q", "tensor shape")
        size = int(np.prod(shape, dtype=np.uint64)) if ndim else 1
        if size * 8 > len(r.data) - r.offset:
            raise CorruptionError(f"tensor {name!r} of shape {shape} needs {size * 8} bytes, "
                                  f"{len(r.data) - r.offset} left", r.offset)
        out[name] = r.array("f8", size, f"tensor {name!r}").reshape(shape)
    return out


def checkpoint_bytes(params, opt_state, kind, scan, config, seed=0):
    parts = [_header(kind, scan, seed, config), _tensor_table(params.values())]
    if opt_state is None:
        parts.append(struct.pack("<B", 0))
    else:
        moments = OrderedDict()
        for name in params.names():
            if name in opt_state.m:
                moments["m/" + name] = opt_state.m[name]
                moments["v/" + name] = opt_state.v[name]
        parts += [struct.pack("<B", 1),
                  struct.pack("<Q4d", opt_state.step, opt_state.lr, opt_state.beta1, opt_state.beta2, opt_state.eps),
                  _tensor_table(moments)]
    return b"".join(parts)


def save_checkpoint(params, opt_state, path, kind=KIND_GENERATOR, scan=None, config=None, seed=0):
    _write(path, checkpoint_bytes(params, opt_state, kind, scan or ScanConfig(), config or {}, seed))


def checkpoint_from_bytes(data, expected_kind=None):
    r = _Reader(data)
    kind, scan, seed, config = _read_header(r, expected_kind)
    tensors = _read_tensor_table(r)
    params = ParamStore()
    for name, value in tensors.items():
        params.add(name, value)
    (flag,) = r.unpack("B", "optimizer flag")
    opt_state = None
    if flag:
        step, lr, b1, b2, eps = r.unpack("Q4d", "optimizer state")
        moments = _read_tensor_table(r)
        opt_state = OptState(lr=lr, beta1=b1, beta2=b2, eps=eps, step=step)
        for name in params.names():
            if "m/" + name in moments:
                opt_state.m[name] = moments["m/" + name]
                opt_state.v[name] = moments["v/" + name]
    r.finish()
    return {"kind": KIND_NAMES[kind], "scan": scan, "seed": seed, "config": config,
            "params": params, "opt_state": opt_state}


def load_checkpoint(path, expected_kind=None):
    return checkpoint_from_bytes(Path(path).read_bytes(), expected_kind)


def _check_manifest(loaded, fresh):
    """Names and shapes in the file must match those the config implies."""
    got = [(k, v.shape) for k, v in loaded.items()]
    want = [(k, v.value.shape) for k, v in fresh.items()]
    if got != want:
        raise FormatError(f"checkpoint tensor manifest {got} does not match model manifest {want}")


def save_generator(model, path, seed=0):
    save_checkpoint(model.params, getattr(model, "opt_state", None), path, KIND_GENERATOR,
                    model.scan, model.config.to_dict(), seed)


def load_generator(path):
    from .generator import GeneratorConfig, GeneratorModel

    ck = load_checkpoint(path, KIND_GENERATOR)
    try:
        cfg = GeneratorConfig.from_dict(ck["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad generator config in checkpoint: {exc}") from None
    _check_manifest(ck["params"], GeneratorModel(cfg).params)
    model = GeneratorModel(cfg, ck["params"])
    model.opt_state = ck["opt_state"]
    return model


def save_policy(pol, path, seed=0):
    save_checkpoint(pol.params, getattr(pol, "opt_state", None), path, KIND_POLICY,
                    pol.config.scan, pol.config.to_dict(), seed)


def load_policy(path):
    from .policy import PolicyConfig, PolicyParams

    ck = load_checkpoint(path, KIND_POLICY)
    try:
        cfg = PolicyConfig.from_dict(ck["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad policy config in checkpoint: {exc}") from None
    _check_manifest(ck["params"], PolicyParams(cfg).params)
    pol = PolicyParams(cfg, ck["params"])
    pol.opt_state = ck["opt_state"]
    return pol
