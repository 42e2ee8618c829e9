import struct

import numpy as np
import pytest
from helpers import resume_is_bit_exact, small_dataset

from scanirl import archive
from scanirl.errors import CorruptionError, FormatError
from scanirl.generator import GeneratorConfig, GeneratorModel
from scanirl.numerics import OptState, ParamStore
from scanirl.policy import PolicyConfig, PolicyParams
from scanirl.scans import ScanConfig


def test_dataset_round_trip(tmp_path):
    ds = small_dataset()
    path = tmp_path / "ds.nmir"
    archive.save_dataset(ds, path)
    loaded = archive.load_dataset(path)
    assert loaded.equals(ds)
    assert archive.dataset_bytes(loaded) == path.read_bytes()


def test_dataset_layout():
    ds = small_dataset()
    data = archive.dataset_bytes(ds)
    assert data[:4] == b"NMIR"
    assert struct.unpack_from("<I", data, 4)[0] == archive.VERSION
    header = archive._header(archive.KIND_DATASET, ds.scan_config, ds.seed,
                             {"env_spec": ds.env_spec.to_dict(), "obs_dim": 3})
    assert data.startswith(header)
    (count,) = struct.unpack_from("<Q", data, len(header))
    assert count == len(ds)
    record = 3 * 8 + 48 + 2 + 3 * 8 + 48 + 1
    assert len(data) == len(header) + 8 + count * record
    first = len(header) + 8
    np.testing.assert_array_equal(np.frombuffer(data, "<f8", 3, first), ds.obs[0])
    assert struct.unpack_from("<H", data, first + 24 + 48)[0] == ds.actions[0]


def test_bad_magic_reads_nothing_else(tmp_path):
    path = tmp_path / "x.nmir"
    path.write_bytes(b"XXXX")
    with pytest.raises(FormatError, match="magic"):
        archive.load_dataset(path)


def test_newer_version_names_both(tmp_path):
    data = bytearray(archive.dataset_bytes(small_dataset()))
    struct.pack_into("<I", data, 4, archive.VERSION + 1)
    with pytest.raises(FormatError, match=rf"version {archive.VERSION + 1}.*version {archive.VERSION}"):
        archive.dataset_from_bytes(bytes(data))


def test_truncation_reports_offset():
    data = archive.dataset_bytes(small_dataset())
    for cut in (2, 20, len(data) // 2, len(data) - 1):
        with pytest.raises(CorruptionError) as info:
            archive.dataset_from_bytes(data[:cut])
        assert info.value.offset <= cut
        assert "byte offset" in str(info.value)


def test_trailing_bytes_rejected():
    with pytest.raises(CorruptionError):
        archive.dataset_from_bytes(archive.dataset_bytes(small_dataset()) + b"\0")


def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    p = ParamStore()
    p.add("a", rng.normal(size=(3, 4)))
    p.add("b", rng.normal(size=5) * 1e-300)
    p.add("c", np.array(np.pi))
    state = OptState(lr=0.01, step=7)
    state.m = {"a": rng.normal(size=(3, 4))}
    state.v = {"a": rng.random((3, 4))}
    path = tmp_path / "ck.nmir"
    archive.save_checkpoint(p, state, path, seed=9)
    ck = archive.load_checkpoint(path)
    assert ck["seed"] == 9
    assert all(ck["params"][k].value.tobytes() == v.tobytes() for k, v in p.values().items())
    assert ck["opt_state"].step == 7 and ck["opt_state"].lr == 0.01
    assert ck["opt_state"].m["a"].tobytes() == state.m["a"].tobytes()
    assert archive.checkpoint_bytes(ck["params"], ck["opt_state"], archive.KIND_GENERATOR, ScanConfig(), {}, 9) \
        == path.read_bytes()


def test_empty_param_store(tmp_path):
    path = tmp_path / "empty.nmir"
    archive.save_checkpoint(ParamStore(), None, path)
    ck = archive.load_checkpoint(path)
    assert ck["params"].names() == [] and ck["opt_state"] is None


def test_corrupted_tensor_length():
    p = ParamStore()
    p.add("w", np.ones((2, 2)))
    data = bytearray(archive.checkpoint_bytes(p, None, archive.KIND_POLICY, ScanConfig(), {}))
    dim_at = data.index(b"w") + 2
    struct.pack_into("<Q", data, dim_at, 10 ** 6)
    with pytest.raises(CorruptionError):
        archive.checkpoint_from_bytes(bytes(data))


def test_model_round_trips(tmp_path):
    gen = GeneratorModel(GeneratorConfig(ScanConfig(2, 2, 3, 4), embed=3, hidden=4, context=2, encoder_hidden=3), seed=1)
    archive.save_generator(gen, tmp_path / "g.nmir")
    back = archive.load_generator(tmp_path / "g.nmir")
    assert back.config == gen.config
    assert all(back.params[k].value.tobytes() == v.tobytes() for k, v in gen.params.values().items())
    pol = PolicyParams(PolicyConfig(ScanConfig(2, 2, 3, 4), 3, 3, 5), seed=1)
    archive.save_policy(pol, tmp_path / "p.nmir")
    assert archive.load_policy(tmp_path / "p.nmir").config == pol.config


def test_wrong_kind_and_manifest_mismatch(tmp_path):
    pol = PolicyParams(PolicyConfig(ScanConfig(2, 2, 3, 4), 3, 3, 5))
    path = tmp_path / "p.nmir"
    archive.save_policy(pol, path)
    with pytest.raises(FormatError):
        archive.load_generator(path)
    cfg = pol.config.to_dict()
    cfg["hidden"] = 6
    archive.save_checkpoint(pol.params, None, path, archive.KIND_POLICY, pol.config.scan, cfg)
    with pytest.raises(FormatError, match="manifest"):
        archive.load_policy(path)


@pytest.mark.parametrize("kind", ["generator", "policy"])
def test_resume_matches_uninterrupted(kind, tmp_path):
    assert resume_is_bit_exact(kind, tmp_path)
