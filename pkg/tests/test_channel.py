import json

import numpy as np
import pytest

from bcbounds.channel import (
    Channel,
    ChannelError,
    ChannelParseError,
    builtin_channel,
    load_channel,
    make_blackwell,
    make_bsc_bc,
    make_copy,
    save_channel,
    validate,
)
from bcbounds.probkit import attach_channel, entropy, random_pmf

from conftest import random_channel


class TestValidate:
    def test_identity_kernel(self):
        assert validate(make_copy(2)).ok

    def test_deficit_reported(self):
        k = make_copy(2).matrix.copy()
        k[1] = [0.0, 0.0, 0.0, 0.9]
        rep = validate(Channel.from_matrix(k, 2, 2))
        assert not rep.ok
        assert rep.row == 1
        assert rep.deviation == pytest.approx(-0.1)
        assert "row 1" in rep.message and "deficit" in rep.message

    def test_negative_entry(self):
        rep = validate(Channel.from_matrix([[1.2, -0.2, 0, 0]], 2, 2))
        assert not rep.ok and rep.row == 0

    def test_random_kernel(self, rng):
        for _ in range(5):
            assert validate(random_channel(rng, 3, 2, 4)).ok


class TestBuilders:
    def test_noiseless_bsc(self):
        assert make_bsc_bc(0.0, 0.0) == make_copy(2)

    def test_bsc_marginals(self):
        ch = make_bsc_bc(0.1, 0.2)
        np.testing.assert_allclose(ch.marginal_y(), [[0.9, 0.1], [0.1, 0.9]], atol=1e-15)
        np.testing.assert_allclose(ch.marginal_z(), [[0.8, 0.2], [0.2, 0.8]], atol=1e-15)

    def test_bsc_row(self):
        # (1-p1)(1-p2), (1-p1)p2, p1(1-p2), p1 p2
        np.testing.assert_allclose(make_bsc_bc(0.1, 0.2).matrix[0], [0.72, 0.18, 0.08, 0.02], atol=1e-15)

    @pytest.mark.parametrize("p1", [0.0, 0.05, 0.3, 0.5])
    def test_marginal_depends_on_own_flip_only(self, p1):
        for p2 in (0.0, 0.2, 0.5):
            np.testing.assert_allclose(make_bsc_bc(p1, p2).marginal_y(), make_bsc_bc(p1, 0.0).marginal_y(),
                                       atol=1e-12)
            np.testing.assert_allclose(make_bsc_bc(p2, p1).marginal_z(), make_bsc_bc(0.0, p1).marginal_z(),
                                       atol=1e-12)

    @pytest.mark.parametrize("p", [(-0.1, 0.2), (0.1, 0.6)])
    def test_bsc_range(self, p):
        with pytest.raises(ChannelError):
            make_bsc_bc(*p)

    def test_blackwell(self, rng):
        ch = make_blackwell()
        assert ch.kernel[0, 0, 0] == 1.0
        assert set(np.unique(ch.kernel)) == {0.0, 1.0}
        p = attach_channel(random_pmf(["X"], [3], rng), ch)
        assert entropy(p, ["X", "Y", "Z"]) - entropy(p, ["X"]) == pytest.approx(0.0, abs=1e-12)

    def test_builtin_names(self):
        assert builtin_channel("bsc-bc:0.1,0.2") == make_bsc_bc(0.1, 0.2)
        assert builtin_channel("blackwell") == make_blackwell()
        assert builtin_channel("copy") == make_copy(2)
        with pytest.raises(ChannelError):
            builtin_channel("bsc-bc:0.1")
        with pytest.raises(ChannelError):
            builtin_channel("gaussian")


class TestFiles:
    def test_round_trip(self, tmp_path):
        for ch in (make_bsc_bc(0.1, 0.2), make_blackwell(), make_bsc_bc(1 / 3, 0.07)):
            path = tmp_path / "ch.json"
            save_channel(ch, path)
            back = load_channel(path)
            assert np.array_equal(back.kernel, ch.kernel)

    def test_round_trip_random(self, tmp_path, rng):
        ch = random_channel(rng, 4, 3, 2)
        save_channel(ch, tmp_path / "r.json")
        assert np.array_equal(load_channel(tmp_path / "r.json").kernel, ch.kernel)

    def test_file_layout(self, tmp_path):
        save_channel(make_bsc_bc(0.1, 0.2), tmp_path / "c.json")
        doc = json.loads((tmp_path / "c.json").read_text())
        assert set(doc) == {"x_card", "y_card", "z_card", "kernel"}
        assert doc["kernel"][0] == pytest.approx([0.72, 0.18, 0.08, 0.02])

    def test_malformed_field(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"x_card": "two", "y_card": 2, "z_card": 2, "kernel": []}))
        with pytest.raises(ChannelParseError, match="x_card") as err:
            load_channel(path)
        assert err.value.field == "x_card"

    def test_bad_entry_named(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"x_card": 1, "y_card": 1, "z_card": 2, "kernel": [[0.5, "x"]]}))
        with pytest.raises(ChannelParseError, match=r"kernel\[0\]\[1\]"):
            load_channel(path)

    def test_syntax_error_has_line(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{\n  "x_card": 2,\n  "y_card": 2\n  "z_card": 2\n}')
        with pytest.raises(ChannelParseError, match="line 4") as err:
            load_channel(path)
        assert err.value.line == 4

    def test_row_excess_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"x_card": 1, "y_card": 2, "z_card": 1, "kernel": [[0.5, 0.5 + 1e-6]]}))
        with pytest.raises(ChannelError, match="row 0"):
            load_channel(path)

    def test_hand_written_decimals_renormalized(self, tmp_path):
        path = tmp_path / "ok.json"
        third = 0.3333333333
        path.write_text(json.dumps({"x_card": 1, "y_card": 3, "z_card": 1,
                                    "kernel": [[third, third, third + 1e-10]]}))
        ch = load_channel(path)
        assert validate(ch).ok
