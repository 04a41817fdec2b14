"""Published analysis/synthesis coefficient tables for the supported families.

Values are the standard tables (as distributed with PyWavelets and the
MATLAB wavelet toolbox).  Taps are ordered for convolution, so that
``conv(dec_lo, rec_lo) + conv(dec_hi, rec_hi) == 2 * delta[len - 1]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

_S = 0.7071067811865476

# name: (dec_lo, dec_hi, rec_lo, rec_hi)
_TABLES = {
    "haar": (
        [_S, _S],
        [-_S, _S],
        [_S, _S],
        [_S, -_S],
    ),
    "db2": (
        [-0.12940952255126037, 0.2241438680420134, 0.8365163037378079, 0.48296291314453416],
        [-0.48296291314453416, 0.8365163037378079, -0.2241438680420134, -0.12940952255126037],
        [0.48296291314453416, 0.8365163037378079, 0.2241438680420134, -0.12940952255126037],
        [-0.12940952255126037, -0.2241438680420134, 0.8365163037378079, -0.48296291314453416],
    ),
    "db4": (
        [-0.010597401785069032, 0.0328830116668852, 0.030841381835560764, -0.18703481171909309,
         -0.027983769416859854, 0.6308807679298589, 0.7148465705529157, 0.2303778133088965],
        [-0.2303778133088965, 0.7148465705529157, -0.6308807679298589, -0.027983769416859854,
         0.18703481171909309, 0.030841381835560764, -0.0328830116668852, -0.010597401785069032],
        [0.2303778133088965, 0.7148465705529157, 0.6308807679298589, -0.027983769416859854,
         -0.18703481171909309, 0.030841381835560764, 0.0328830116668852, -0.010597401785069032],
        [-0.010597401785069032, -0.0328830116668852, 0.030841381835560764, 0.18703481171909309,
         -0.027983769416859854, -0.6308807679298589, 0.7148465705529157, -0.2303778133088965],
    ),
    "bior2.2": (
        [0.0, -0.1767766952966369, 0.3535533905932738, 1.0606601717798212, 0.3535533905932738,
         -0.1767766952966369],
        [0.0, 0.3535533905932738, -0.7071067811865476, 0.3535533905932738, 0.0, 0.0],
        [0.0, 0.3535533905932738, 0.7071067811865476, 0.3535533905932738, 0.0, 0.0],
        [0.0, 0.1767766952966369, 0.3535533905932738, -1.0606601717798212, 0.3535533905932738,
         0.1767766952966369],
    ),
    "bior4.4": (
        [0.0, 0.03782845550726404, -0.023849465019556843, -0.11062440441843718, 0.37740285561283066,
         0.8526986790088938, 0.37740285561283066, -0.11062440441843718, -0.023849465019556843,
         0.03782845550726404],
        [0.0, -0.06453888262869706, 0.04068941760916406, 0.41809227322161724, -0.7884856164055829,
         0.41809227322161724, 0.04068941760916406, -0.06453888262869706, 0.0, 0.0],
        [0.0, -0.06453888262869706, -0.04068941760916406, 0.41809227322161724, 0.7884856164055829,
         0.41809227322161724, -0.04068941760916406, -0.06453888262869706, 0.0, 0.0],
        [0.0, -0.03782845550726404, -0.023849465019556843, 0.11062440441843718, 0.37740285561283066,
         -0.8526986790088938, 0.37740285561283066, 0.11062440441843718, -0.023849465019556843,
         -0.03782845550726404],
    ),
    "rbio2.2": (
        [0.0, 0.0, 0.3535533905932738, 0.7071067811865476, 0.3535533905932738, 0.0],
        [0.1767766952966369, 0.3535533905932738, -1.0606601717798212, 0.3535533905932738,
         0.1767766952966369, 0.0],
        [-0.1767766952966369, 0.3535533905932738, 1.0606601717798212, 0.3535533905932738,
         -0.1767766952966369, 0.0],
        [0.0, 0.0, 0.3535533905932738, -0.7071067811865476, 0.3535533905932738, 0.0],
    ),
    "coif2": (
        [-0.000720549445520347, -0.0018232088709110323, 0.005611434819368834, 0.02368017194684777,
         -0.05943441864643109, -0.07648859907828076, 0.4170051844232391, 0.8127236354494135,
         0.3861100668227629, -0.0673725547237256, -0.04146493678687178, 0.01638733646320364],
        [-0.01638733646320364, -0.04146493678687178, 0.0673725547237256, 0.3861100668227629,
         -0.8127236354494135, 0.4170051844232391, 0.07648859907828076, -0.05943441864643109,
         -0.02368017194684777, 0.005611434819368834, 0.0018232088709110323, -0.000720549445520347],
        [0.01638733646320364, -0.04146493678687178, -0.0673725547237256, 0.3861100668227629,
         0.8127236354494135, 0.4170051844232391, -0.07648859907828076, -0.05943441864643109,
         0.02368017194684777, 0.005611434819368834, -0.0018232088709110323, -0.000720549445520347],
        [-0.000720549445520347, 0.0018232088709110323, 0.005611434819368834, -0.02368017194684777,
         -0.05943441864643109, 0.07648859907828076, 0.4170051844232391, -0.8127236354494135,
         0.3861100668227629, 0.0673725547237256, -0.04146493678687178, -0.01638733646320364],
    ),
}

SUPPORTED_FILTERS = tuple(_TABLES)


@dataclass(frozen=True)
class WaveletFilterPair:
    """Analysis (``h0``, ``g0``) and synthesis (``h1``, ``g1``) taps of one family."""

    name: str
    h0: tuple
    g0: tuple
    h1: tuple
    g1: tuple

    @property
    def length(self) -> int:
        return len(self.h0)

    def arrays(self):
        return tuple(np.asarray(t, dtype=np.float64) for t in (self.h0, self.g0, self.h1, self.g1))


def make_filter_pair(name: str) -> WaveletFilterPair:
    """Return the filter bank for ``name``.

    Raises
    ------
    ConfigError
        If ``name`` is not one of :data:`SUPPORTED_FILTERS`.
    """
    key = str(name).lower()
    if key not in _TABLES:
        raise ConfigError(
            f"unknown wavelet filter {name!r}; supported: {', '.join(SUPPORTED_FILTERS)}"
        )
    h0, g0, h1, g1 = (tuple(float(v) for v in taps) for taps in _TABLES[key])
    return WaveletFilterPair(key, h0, g0, h1, g1)
