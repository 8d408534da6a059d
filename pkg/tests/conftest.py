import numpy as np
import pytest

from srtransgan.autodiff import Tensor, default_dtype, max_relative_error, numerical_grad, ops
from srtransgan.discriminator import DiscriminatorConfig
from srtransgan.generator import GeneratorConfig

# filled by test_acceptance.py, echoed in the terminal summary
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])


def tiny_generator_config(**kw) -> GeneratorConfig:
    base = dict(base_channels=8, stacks=[1, 1, 1, 1], refinement_stacks=1)
    base.update(kw)
    return GeneratorConfig(**base)


def tiny_discriminator_config(**kw) -> DiscriminatorConfig:
    base = dict(image_size=16, patch_size=8, stride_h=4, stride_w=4, embed_dim=16, depth=2, heads=2)
    base.update(kw)
    return DiscriminatorConfig(**base)


def weighted_sum(out: Tensor, weights: np.ndarray) -> Tensor:
    """Scalar probe sum(out * w) so every output element gets an O(1) gradient."""
    return ops.sum(ops.mul(out, Tensor(weights, dtype=out.dtype)))


def fd_error(f, tensors, eps=1e-6, max_entries=None, seed=0) -> float:
    """Worst relative error between backward and central differences.

    With ``max_entries`` only a random subset of each tensor's entries is
    perturbed (the backward pass still covers all of them).
    """
    if isinstance(tensors, Tensor):
        tensors = [tensors]
    for t in tensors:
        t.grad = None
    f().backward()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for t in tensors:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        if max_entries is None or t.size <= max_entries:
            worst = max(worst, max_relative_error(analytic, numerical_grad(f, t, eps)))
            continue
        flat = t.data.reshape(-1)
        for i in rng.choice(t.size, size=max_entries, replace=False):
            orig = flat[i]
            flat[i] = orig + eps
            up = float(f().data)
            flat[i] = orig - eps
            down = float(f().data)
            flat[i] = orig
            worst = max(worst, max_relative_error(analytic.reshape(-1)[i], (up - down) / (2 * eps)))
    return worst


@pytest.fixture
def f64():
    with default_dtype(np.float64):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def unit_gain(module, seed):
    """Random weights with fan-in scaling so every path carries an O(1) gain.

    Default initialisation starves deep layers of gradient (1e-7 and below),
    where central differences drown in roundoff; this keeps the check sharp.
    """
    r = np.random.default_rng(seed)
    for name, p in module.named_parameters():
        if p.ndim >= 2:
            p.data[...] = r.normal(size=p.shape) / np.sqrt(np.prod(p.shape[1:]))
        elif name.endswith(("norm.weight", "norm1.weight", "norm2.weight", "temperature")):
            p.data[...] = 1.0 + 0.2 * r.normal(size=p.shape)
        else:
            p.data[...] = 0.2 * r.normal(size=p.shape)
    return module


def module_grad_error(module, x_shape, seed, max_entries=4, eps=1e-5, call=None, exclude=()):
    """FD check of a module: every input entry, ``max_entries`` sampled entries per parameter.

    Parameters whose name ends with an entry of ``exclude`` are skipped; use it
    only for gradients that are identically zero, where central differences
    return pure roundoff and the relative error is meaningless.
    """
    call = call or (lambda x: module(x))
    x = Tensor(np.random.default_rng(seed).normal(size=x_shape), requires_grad=True)
    probe = np.random.default_rng(seed + 1).normal(size=call(x).shape)
    f = lambda: weighted_sum(call(x), probe)  # noqa: E731
    params = [p for n, p in module.named_parameters() if not n.endswith(tuple(exclude))]
    return max(fd_error(f, [x], eps=eps), fd_error(f, params, eps=eps, max_entries=max_entries, seed=seed))
