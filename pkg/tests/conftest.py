import numpy as np
import pytest

from nowcast.layers import ConvLSTMParams, init_convlstm_params
from nowcast.model import ArchitectureConfig, build_model


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tiny_arch(blocks=((4, 3), (4, 3)), frames=4, hw=(6, 6), **kw):
    return ArchitectureConfig(
        input_frames=frames,
        output_frames=frames,
        frame_h=hw[0],
        frame_w=hw[1],
        convlstm_blocks=blocks,
        strict_arch=False,
        **kw,
    )


def tiny_model(seed=0, dtype=np.float64, **kw):
    return build_model(tiny_arch(**kw), seed=seed, dtype=dtype)


def random_cell_params(rng, in_ch=2, filters=3, k=3, peephole_hw=None, dtype=np.float64):
    p = init_convlstm_params(rng, in_ch, filters, k, peephole_hw=peephole_hw, dtype=dtype)
    # perturb biases so tests do not sit at the all-zero special case
    p.bias = rng.normal(scale=0.3, size=p.bias.shape).astype(dtype)
    return p
