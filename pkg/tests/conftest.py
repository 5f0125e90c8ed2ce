import numpy as np
import pytest

import moirelax as mx


@pytest.fixture(scope="session")
def basis():
    return mx.graphene_basis()


@pytest.fixture(scope="session")
def model():
    return mx.GsfeModel.graphene()


@pytest.fixture(scope="session")
def moduli():
    return mx.ElasticModuli.graphene()


@pytest.fixture(scope="session")
def walls(basis, model, moduli):
    return {t: mx.WallSpec.build(t, 0.0, basis, moduli, model) for t in (1, 2, 3)}


class RelaxCache:
    """Session cache so the expensive relaxations run once across test files."""

    def __init__(self, basis, model, moduli):
        self.basis = basis
        self.model = model
        self.moduli = moduli
        self._store = {}

    def family(self, kind, parameter):
        if kind == "twist":
            return mx.StrainFamily.twist(np.deg2rad(parameter), self.basis)
        return mx.StrainFamily(kind, parameter, self.basis)

    def get(self, kind, parameter, grid_n, grad_tol=3e-4, initial=None,
            max_iter=6000):
        key = (kind, parameter, grid_n, grad_tol)
        if key not in self._store:
            pair = mx.LayerPair.from_family(self.family(kind, parameter),
                                            self.moduli)
            result = mx.relax(pair, self.model, grid_n,
                              mx.RelaxOptions(grad_tol=grad_tol,
                                              max_iter=max_iter,
                                              initial=initial))
            self._store[key] = (pair, result)
        return self._store[key]

    def _chained(self, kind, plan, polish):
        """Warm-start chain over parameters, then prolong + polish the last one.

        Spectral prolongation transfers a converged coarse solution almost
        exactly, so the polish pass on the production grid is cheap.
        """
        previous = None
        out = {}
        for parameter, n in plan:
            pair, result = self.get(kind, parameter, n, grad_tol=3e-4,
                                    initial=previous)
            previous = result.field
            out[parameter] = (pair, result)
        parameter, n = polish
        pair, result = self.get(kind, parameter, n, grad_tol=3e-4,
                                initial=previous)
        out[parameter] = (pair, result)
        return out

    def twist_sweep(self):
        """The production twist sweep, warm-start chained large to small angle."""
        return self._chained(
            "twist", [(0.8, 64), (0.4, 128), (0.2, 256), (0.1, 256)],
            polish=(0.1, 512))

    def shear_sweep(self):
        return self._chained(
            "pure_shear",
            [(0.0125, 64), (0.00625, 128), (0.003125, 256), (0.0015625, 256)],
            polish=(0.0015625, 512))


@pytest.fixture(scope="session")
def relax_cache(basis, model, moduli):
    return RelaxCache(basis, model, moduli)
