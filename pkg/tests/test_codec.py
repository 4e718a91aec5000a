from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from maxloghash import codec
from maxloghash.baselines import HllSketch, MinHashSketch
from maxloghash.errors import ParseError
from maxloghash.oph import OphSketch
from maxloghash.sketch import MaxLogSketch

GOLDEN = Path(__file__).parent / "golden"


class TestPacking:
    @given(st.integers(1, 12).flatmap(lambda b: st.tuples(st.just(b), st.lists(st.integers(0, (1 << b) - 1), max_size=60))))
    def test_round_trip(self, case):
        bits, values = case
        data = codec.pack_fields(np.array(values, dtype=np.uint64), bits)
        assert len(data) == codec.packed_size(len(values), bits)
        assert codec.unpack_fields(data, len(values), bits).tolist() == values

    def test_lsb_first(self):
        assert codec.pack_fields(np.array([1, 2, 3]), 2) == bytes([0b111001])


class TestEnvelope:
    @pytest.mark.parametrize(
        "sketch",
        [
            MaxLogSketch.from_items(range(1, 40), 16),
            OphSketch.from_items(range(1, 40), 16),
            MinHashSketch.from_items(range(1, 40), 16),
            HllSketch.from_items(range(1, 40), 16),
        ],
        ids=["maxlog", "oph", "minhash", "hll"],
    )
    def test_loads_dispatch(self, sketch):
        back = codec.loads(sketch.to_bytes())
        assert type(back) is type(sketch) and back == sketch

    def test_wrong_tag(self):
        data = MinHashSketch.from_items([1], 4).to_bytes()
        with pytest.raises(ParseError):
            MaxLogSketch.from_bytes(data)

    def test_bad_version_and_magic(self):
        data = bytearray(MaxLogSketch.from_items([1], 4).to_bytes())
        data[4] = 9
        with pytest.raises(ParseError, match="version"):
            codec.loads(bytes(data))
        with pytest.raises(ParseError):
            codec.loads(b"MLG")

    def test_unknown_tag(self):
        with pytest.raises(ParseError):
            codec.loads(codec.header(77))

    def test_fixture_stable(self):
        sk = MaxLogSketch.from_items(range(1, 21), 8, 6, 42)
        assert sk.to_bytes().hex() == (GOLDEN / "maxlog_k8_w6_s42.hex").read_text().strip()
