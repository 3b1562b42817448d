import numpy as np
import pytest
import torch


def fd_check(fn, module, eps=1e-4, max_elems=16, seed=0):
    """Compare autograd against central differences for every parameter of ``module``.

    The scalar objective is a fixed random projection of ``fn()``. Per
    parameter tensor, up to ``max_elems`` sampled entries plus one random
    direction over the whole tensor are checked. Returns the worst
    relative error (vector 2-norm) per parameter name.
    """
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        ref = fn()
    w = torch.randn(ref.shape, generator=gen, dtype=ref.dtype)

    def objective():
        return (fn() * w).sum()

    module.zero_grad()
    objective().backward()
    errors = {}
    for name, p in module.named_parameters():
        g = p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p)
        flat = p.data.view(-1)
        n = flat.numel()
        idx = torch.randperm(n, generator=gen)[:max_elems]
        fd = torch.empty(len(idx), dtype=p.dtype)
        with torch.no_grad():
            for j, i in enumerate(idx):
                orig = flat[i].item()
                flat[i] = orig + eps
                up = objective().item()
                flat[i] = orig - eps
                down = objective().item()
                flat[i] = orig
                fd[j] = (up - down) / (2 * eps)
            d = torch.randn(p.shape, generator=gen, dtype=p.dtype)
            orig = p.data.clone()
            p.data.add_(eps * d)
            up = objective().item()
            p.data.copy_(orig - eps * d)
            down = objective().item()
            p.data.copy_(orig)
        ad = g.view(-1)[idx]
        e_elem = (fd - ad).norm().item() / max(ad.norm().item(), fd.norm().item(), 1e-6)
        dd_fd = (up - down) / (2 * eps)
        dd_ad = (g * d).sum().item()
        e_dir = abs(dd_fd - dd_ad) / max(abs(dd_ad), abs(dd_fd), 1e-6)
        errors[name] = max(e_elem, e_dir)
    return errors


@pytest.fixture
def double():
    prev = torch.get_default_dtype()
    torch.set_default_dtype(torch.float64)
    yield
    torch.set_default_dtype(prev)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, text): acceptance criterion number and summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, text = mark.args
    key = (n, text)
    failed = rep.failed or (rep.when == "setup" and rep.skipped)
    if rep.when == "call" or failed:
        _criteria[key] = _criteria.get(key, True) and not failed


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for (n, text), ok in sorted(_criteria.items()):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  C{n:<2} {text}")
