import numpy as np

from nearcrit import parallel
from nearcrit.lattice import LatticeSpec, build_lattice
from nearcrit.parallel import concat_replicates, map_replicates, sum_replicates
from nearcrit.scaling import arm_counts, box_lattice, crossing_counts
from nearcrit.sampling import ProbabilityField


def test_blocks_cover_replicates_in_order():
    got = concat_replicates(lambda a, n: np.arange(a, a + n), 1005, rep0=7, chunk=100, workers=3)
    assert np.array_equal(got, np.arange(7, 1012))
    assert sum_replicates(lambda a, n: np.array([n]), 1005, chunk=64, workers=2)[0] == 1005
    assert len(map_replicates(lambda a, n: n, 250, chunk=100, workers=1)) == 3


def test_results_independent_of_workers_and_chunking():
    lat = build_lattice(LatticeSpec.centered("triangular-site", 1.0, 10.0))
    ref = arm_counts(lat, 1.0, (4.0, 8.0), 3000, 5, 0, 15)
    blat, Q = box_lattice("square-bond", 10)
    cref = crossing_counts(blat, Q, ProbabilityField.critical(), 3000, 5)
    try:
        for w in (2, 4):
            parallel.set_workers(w)
            assert np.array_equal(arm_counts(lat, 1.0, (4.0, 8.0), 3000, 5, 0, 15), ref)
            assert np.array_equal(crossing_counts(blat, Q, ProbabilityField.critical(), 3000, 5), cref)
    finally:
        parallel.set_workers(1)


def test_replicate_offsets_compose():
    blat, Q = box_lattice("triangular-site", 8)
    f = ProbabilityField.critical()
    whole = crossing_counts(blat, Q, f, 2000, 3)
    parts = crossing_counts(blat, Q, f, 700, 3) + crossing_counts(blat, Q, f, 1300, 3, rep0=700)
    assert np.array_equal(whole, parts)
