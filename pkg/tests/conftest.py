import numpy as np
import pytest

from mvflstm.encoder import EncoderConfig, ViewConfig

# N=12, one 6/3 view with two bidirectional layers of width 2, M=4, C=3
TINY = EncoderConfig(
    input_dim=12,
    views=(ViewConfig(6, 3, 2, 2),),
    tlstm_layers=2,
    tlstm_hidden=4,
    output_classes=3,
)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def randomize(params, rng, scale=0.5):
    """Spread every array (biases included) so no gradient path sits at zero."""
    for a in params.arrays():
        a[...] = rng.uniform(-scale, scale, size=a.shape)
    return params
