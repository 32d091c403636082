"""Scale-free and multifractal time-series analysis.

Subpackages:
    wavelet    - Daubechies filter bank, L1-normalized pyramids
    scaling    - Welch and wavelet spectra, log-log regression, Hurst mapping
    leaders_mf - wavelet-leader multifractal formalism
    synth      - fGn / fBm / multifractal-random-walk oracles
    grouptests - group-level statistical battery
    pipeline   - dataset ingestion, orchestration, reports, CLI backend
"""

__version__ = "0.1.0"
