import functools

import pytest

from cmc_index_lab import ambient, dec, geometry, jacobi, surfaces


@functools.lru_cache(maxsize=None)
def _mesh(space, family, res, params=(), space_params=()):
    S = ambient.catalog_space(space, **dict(space_params))
    return surfaces.generate_surface(S, family, dict(params), resolution=res)


@functools.lru_cache(maxsize=None)
def _geom(space, family, res, params=(), space_params=()):
    return geometry.compute_geometry(_mesh(space, family, res, params, space_params))


@functools.lru_cache(maxsize=None)
def _basis(space, family, res, params=(), space_params=()):
    m = _mesh(space, family, res, params, space_params)
    g = _geom(space, family, res, params, space_params)
    if m.boundary_edge_mask.any():
        return dec.tangential_harmonic_basis(m, g)
    return dec.harmonic_basis(m, g)


@functools.lru_cache(maxsize=None)
def _assembly(space, family, res, params=(), space_params=()):
    return jacobi.assemble(_mesh(space, family, res, params, space_params), _geom(space, family, res, params, space_params))


@functools.lru_cache(maxsize=None)
def _spectrum(space, family, res, params=(), space_params=(), k=8):
    return jacobi.twisted_spectrum(_assembly(space, family, res, params, space_params), k=k)


class Cache:
    mesh = staticmethod(_mesh)
    geom = staticmethod(_geom)
    basis = staticmethod(_basis)
    assembly = staticmethod(_assembly)
    spectrum = staticmethod(_spectrum)


@pytest.fixture(scope="session")
def cache():
    """Memoized meshes, geometry, bases and spectra keyed by (space, family, res, params)."""
    return Cache


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
