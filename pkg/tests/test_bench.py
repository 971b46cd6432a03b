import pandas as pd
import pytest

from vrd.bench import Benchmarker, reference_ratio, scaling_ratios


class TestBenchmarker:
    def test_run_table(self):
        df = Benchmarker(n_in=2, n_out=2, repetitions=2, seed=1).run([(8, 8), (4, 6)])
        assert list(df.columns) == ["L", "t_fwd_ms", "t_bwd_ms", "height", "width"]
        assert df["L"].tolist() == [64, 24]

    def test_scaling_ratios_sorted_by_size(self):
        df = pd.DataFrame({"L": [400, 100, 1600], "t_fwd_ms": [4.0, 1.0, 20.0]})
        assert scaling_ratios(df) == [4.0, 5.0]

    def test_reference_ratio(self):
        df = pd.DataFrame({"L": [511 * 255], "t_fwd_ms": [816.0], "t_bwd_ms": [380.0],
                           "height": [511], "width": [255]})
        ratio = reference_ratio(df)
        assert ratio["forward"] == pytest.approx(2.0)
        assert ratio["backward"] == pytest.approx(0.5)
        assert reference_ratio(df, 10, 10) is None

    @pytest.mark.slow
    def test_near_linear_scaling(self):
        df = Benchmarker(n_in=16, n_out=8, repetitions=5, seed=0).run([(128, 128), (256, 256), (512, 512)])
        assert all(r <= 5.5 for r in scaling_ratios(df))
