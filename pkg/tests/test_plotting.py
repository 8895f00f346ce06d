import numpy as np

from mfcloads import spectral as sp
from mfcloads.analysis import fit_decay
from mfcloads.plotting import plot_decay, plot_regime_map, plot_spectrum
from mfcloads.series import TimeSeries


def test_figures_written_and_stable(tmp_path, ref):
    t = np.linspace(0, 10, 501)
    ts = TimeSeries(t, 0.5 + 0.3 * np.exp(-t), np.zeros_like(t), h1=np.exp(-0.5 * t))
    fit = fit_decay(ts)
    a = plot_decay(ts, tmp_path / "a.svg", fit=fit)
    b = plot_decay(ts, tmp_path / "b.svg", fit=fit)
    assert a.read_bytes() == b.read_bytes()
    plot_spectrum(sp.spectrum_s0(ref, (-2, 2)), tmp_path / "s.png")
    rows = sp.regime_grid(ref, [5.0, 50.0], [0.0, 20.0])
    plot_regime_map(rows, tmp_path / "m.svg")
    assert (tmp_path / "s.png").stat().st_size > 0 and (tmp_path / "m.svg").exists()
