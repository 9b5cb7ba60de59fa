"""Shared constructors for test fixtures."""
from tvpvecm.data import DeterministicRecipe, build_design
from tvpvecm.synth import SynthSpec, generate


def synth_design(P=1, deterministics=None, **spec):
    res = generate(SynthSpec(**spec))
    det = deterministics or DeterministicRecipe(day_of_week=False)
    return build_design(res.panel, P, det), res.truth
