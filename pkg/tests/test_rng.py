import numpy as np
import pytest
from hypothesis import given, strategies as st

from ergofbm.rng import PHI_STREAM_OFFSET, RngStream, as_generator


class TestRngStream:
    def test_same_address_reproduces(self):
        a = RngStream(7, 3).generator().standard_normal(5)
        b = RngStream(7, 3).generator().standard_normal(5)
        assert np.array_equal(a, b)

    @pytest.mark.parametrize("other", [RngStream(7, 4), RngStream(8, 3), RngStream(7, 3, (0,))])
    def test_distinct_addresses_differ(self, other):
        a = RngStream(7, 3).generator().standard_normal(5)
        assert not np.array_equal(a, other.generator().standard_normal(5))

    def test_child_extends_subpath(self):
        s = RngStream(1, 2).child(5).child(1)
        assert s.subpath == (5, 1)

    def test_phi_offset_separates_streams(self):
        a = RngStream(0, 3).generator().random(3)
        b = RngStream(0, PHI_STREAM_OFFSET + 3).generator().random(3)
        assert not np.array_equal(a, b)

    @pytest.mark.parametrize("seed,stream", [(-1, 0), (0, -1), (2**64, 0), (0, 2**64)])
    def test_rejects_out_of_range(self, seed, stream):
        with pytest.raises(ValueError):
            RngStream(seed, stream)

    def test_as_generator_passthrough(self):
        g = np.random.default_rng(0)
        assert as_generator(g) is g
        assert isinstance(as_generator(RngStream(0)), np.random.Generator)

    @given(st.integers(0, 2**64 - 1), st.integers(0, 2**64 - 1))
    def test_any_u64_pair_is_valid(self, seed, stream):
        x = RngStream(seed, stream).generator().random()
        assert 0.0 <= x < 1.0
