from collections import Counter

import numpy as np
import pytest

from bgtransfer import evolve as ev
from bgtransfer.genome import DEFAULT_BOUNDS, DZ, MZ, Genome, check_twin_pair, TwinPair

BOUNDS = DEFAULT_BOUNDS["german"]


def tiny_config(seed=0, **kw):
    base = dict(population_size=12, generations=2, epochs=3, master_seed=seed)
    base.update(kw)
    return ev.EvolutionConfig(**base)


def scored_members(n, seed=0):
    rng = np.random.default_rng(seed)
    members = [ev.Individual(i, Genome(5 + i % 7, 0.1, 0.2, 1.0), i) for i in range(n)]
    return members, rng.uniform(0, 50, n)


@pytest.mark.parametrize("n", [0, 6, 10, 1202])
def test_config_rejects_bad_population_size(n):
    with pytest.raises(ValueError, match="multiple of 4"):
        ev.EvolutionConfig(population_size=n, master_seed=0)


def test_config_defaults_and_desk():
    c = ev.EvolutionConfig()
    assert (c.population_size, c.generations, c.epochs) == (1200, 20, 1000)
    d = ev.EvolutionConfig.desk(7)
    assert (d.population_size, d.generations, d.epochs, d.master_seed) == (40, 5, 100, 7)
    with pytest.raises(ValueError):
        c.seed()
    with pytest.raises(ValueError):
        ev.EvolutionConfig(master_seed=0, top_fraction=0.0)
    assert c.bounds_for("banknote") == DEFAULT_BOUNDS["banknote"]


def test_derived_seeds_depend_on_every_key_part():
    a = ev.derive_int(1, 2, 3)
    assert a == ev.derive_int(1, 2, 3)
    assert len({a, ev.derive_int(1, 3, 2), ev.derive_int(2, 2, 3), ev.derive_int(1, 2, 3, 0)}) == 4


def test_selection_windows():
    members, fit = scored_members(40)
    top, mid = ev.select_for_mating(members, fit)
    order = np.argsort(fit, kind="stable")
    assert [m.id for m in top] == [members[k].id for k in order[:7]]
    assert [m.id for m in mid] == [members[k].id for k in order[16:23]]
    assert max(fit[m.id] for m in top) <= min(fit[m.id] for m in mid)


def test_selection_ties_broken_by_id():
    members = [ev.Individual(i, Genome(5, 0.1, 0.2, 1.0), i) for i in range(12)]
    top, _ = ev.select_for_mating(members, np.zeros(12))
    assert [m.id for m in top] == [0, 1]


def test_selection_overlap_rejected():
    members, fit = scored_members(4)
    with pytest.raises(ValueError, match="overlap"):
        ev.select_for_mating(members, fit, 0.5, 0.5)


def test_group_counts():
    assert ev.group_counts(10) == (4, 3, 3)
    assert ev.group_counts(9) == (3, 3, 3)
    assert ev.group_counts(300) == (100, 100, 100)
    assert sum(ev.group_counts(7)) == 7


def test_parent_pairs_draw_from_right_pools():
    members, fit = scored_members(60)
    top, mid = ev.select_for_mating(members, fit)
    pairs = ev.parent_pairs(top, mid, 15, np.random.default_rng(0))
    top_ids, mid_ids = {m.id for m in top}, {m.id for m in mid}
    kinds = [(a.id in top_ids) + (b.id in top_ids) for a, b in pairs]
    assert kinds == [2] * 5 + [1] * 5 + [0] * 5
    for a, b in pairs[10:]:
        assert a.id in mid_ids and b.id in mid_ids
    assert all(a is not b for a, b in pairs)


def test_breed_structure():
    members, fit = scored_members(40)
    top, mid = ev.select_for_mating(members, fit)
    kids = ev.breed(top, mid, BOUNDS, 40, 0, ev.IdSource(100))
    assert len(kids) == 40
    assert len({k.id for k in kids}) == 40
    by_pair = {}
    for k in kids:
        by_pair.setdefault(k.pair_id, []).append(k)
    assert len(by_pair) == 20
    zyg = Counter(sibs[0].zygosity for sibs in by_pair.values())
    assert zyg == {MZ: 10, DZ: 10}
    for a, b in by_pair.values():
        assert a.sibling_id == b.id and b.sibling_id == a.id
        if a.zygosity == MZ:
            assert a.genome == b.genome
        else:
            assert sum(x == y for x, y in zip(a.genome.genes, b.genome.genes)) >= 2
    with pytest.raises(ValueError):
        ev.breed(top, mid, BOUNDS, 42, 0)


def test_split_and_combine_keep_twins_apart():
    members, fit = scored_members(20)
    top, mid = ev.select_for_mating(members, fit)
    ids = ev.IdSource()
    a1, a2 = ev.split(ev.breed(top, mid, BOUNDS, 20, 1, ids))
    b1, b2 = ev.split(ev.breed(top, mid, BOUNDS, 20, 2, ids))
    pa, pb = ev.combine(a1, a2, b1, b2, generation=1)
    assert len(pa) == len(pb) == 20
    assert pa.pair_ids == pb.pair_ids  # every pair spans both populations
    for m in pa.members:
        assert m.sibling_id in {x.id for x in pb.members}
    with pytest.raises(ValueError):
        ev.split(a1 + a2 + [a1[0]])
    with pytest.raises(ValueError):
        ev.combine(a1, a2[:-1], b1, b2)


def test_check_population_flags_co_resident_twins():
    g = Genome(5, 0.1, 0.2, 1.0)
    pop = ev.Population([ev.Individual(0, g, 7, MZ), ev.Individual(1, g, 7, MZ)])
    with pytest.raises(ValueError):
        ev.check_population(pop)
    pop = ev.Population([ev.Individual(0, g, 7, DZ), ev.Individual(1, g, 7, DZ)])
    with pytest.raises(ValueError):
        ev.check_population(pop)
    with pytest.raises(ValueError):
        ev.check_population(ev.Population([ev.Individual(0, g, 1), ev.Individual(0, g, 2)]))
    with pytest.raises(ValueError):
        ev.check_population(ev.Population([ev.Individual(0, g, 1)]), size=2)


def test_assess_requires_training(synthetic_tasks):
    pop, _ = ev.init_populations(tiny_config(), BOUNDS)
    with pytest.raises(ValueError):
        ev.assess(pop, synthetic_tasks["german"])


def test_ses_shared_within_pair(synthetic_tasks):
    task = synthetic_tasks["german"]
    members, fit = scored_members(12)
    top, mid = ev.select_for_mating(members, fit)
    ids = ev.IdSource(1000)
    a1, a2 = ev.split(ev.breed(top, mid, BOUNDS, 12, 1, ids))
    b1, b2 = ev.split(ev.breed(top, mid, BOUNDS, 12, 2, ids))
    pops = ev.combine(a1, a2, b1, b2)
    ev.assign_ses(pops, task, 0, 1)
    everyone = pops[0].members + pops[1].members
    by_id = {m.id: m for m in everyone}
    for m in everyone:
        assert m.ses is not None
        assert m.ses == by_id[m.sibling_id].ses
    assert len({m.ses for m in everyone}) > 1


def _check_generation_invariants(pa, pb, n):
    ev.check_population(pa, n)
    ev.check_population(pb, n)
    for pop in (pa, pb):
        zyg = Counter(m.zygosity for m in pop.members)
        assert zyg[MZ] == zyg[DZ] == n // 2
    by_id = {m.id: m for m in pa.members + pb.members}
    for m in pa.members:
        sib = by_id[m.sibling_id]
        assert sib in pb.members
        mask = tuple(x == y for x, y in zip(m.genome.genes, sib.genome.genes))
        if m.zygosity == MZ:
            assert all(mask)
        else:
            assert sum(mask) >= 2
        assert m.ses == sib.ses


def test_evolve_source_invariants_every_generation(synthetic_tasks):
    task = synthetic_tasks["german"]
    config = tiny_config(seed=3, generations=4)
    seen = []

    def hook(gen, stats, pops):
        seen.append(gen)
        assert [s.generation for s in stats] == [gen, gen]
        for pop in pops:
            assert pop.generation == gen + 1

    result = ev.evolve_source(task, config, on_generation=hook)
    assert seen == [0, 1, 2, 3]
    assert len(result.stats) == 2 * (config.generations + 1)
    for s in result.stats:
        if s.generation > 0:
            assert s.n_mz == s.n_dz == config.population_size // 2
    _check_generation_invariants(result.pop_a, result.pop_b, config.population_size)
    assert all(m.fitness is not None for m in result.pop_a.members)


def test_evolve_source_zero_generations(synthetic_tasks):
    result = ev.evolve_source(synthetic_tasks["german"], tiny_config(generations=0))
    assert result.stats == []
    assert all(m.fitness is None and m.zygosity is None for m in result.pop_a.members)


def test_serial_and_parallel_runs_agree(synthetic_tasks):
    task = synthetic_tasks["banknote"]
    serial = ev.evolve_source(task, tiny_config(seed=5, jobs=1))
    parallel = ev.evolve_source(task, tiny_config(seed=5, jobs=4))
    assert [s.to_dict() for s in serial.stats] == [s.to_dict() for s in parallel.stats]
    assert [m.to_dict() for m in serial.pop_a.members] == [m.to_dict() for m in parallel.pop_a.members]


def test_different_seeds_differ(synthetic_tasks):
    task = synthetic_tasks["banknote"]
    a = ev.evolve_source(task, tiny_config(seed=1, generations=1))
    b = ev.evolve_source(task, tiny_config(seed=2, generations=1))
    assert [m.genome for m in a.pop_a.members] != [m.genome for m in b.pop_a.members]


def test_divergent_members_score_worst(synthetic_tasks):
    wild = ev.EvolutionConfig(population_size=4, generations=1, epochs=50, master_seed=0,
                              bounds=ev.CalibrationBounds((3, 3), (80.0, 90.0), (8.0, 9.0), (5.0, 6.0)))
    result = ev.evolve_source(synthetic_tasks["german"], wild)
    for m in result.pop_a.members:
        if m.divergent:
            assert m.fitness == ev.WORST_FITNESS
    assert any(s.n_divergent for s in result.stats)


def test_merge_final(synthetic_tasks):
    config = tiny_config(seed=2)
    result = ev.evolve_source(synthetic_tasks["german"], config)
    merged = ev.merge_final(result.pop_a, result.pop_b, config, BOUNDS)
    assert len(merged) == config.population_size
    assert all(m.zygosity is None and m.sibling_id is None for m in merged.members)
    ev.check_population(merged, config.population_size)
    old_ids = {m.id for m in result.pop_a.members + result.pop_b.members}
    assert not old_ids & {m.id for m in merged.members}
    assert all(BOUNDS.contains(m.genome) for m in merged.members)
    again = ev.merge_final(result.pop_a, result.pop_b, config, BOUNDS)
    assert [m.genome for m in again.members] == [m.genome for m in merged.members]


def test_merge_final_requires_assessment():
    config = tiny_config()
    pa, pb = ev.init_populations(config, BOUNDS)
    with pytest.raises(ValueError):
        ev.merge_final(pa, pb, config, BOUNDS)
    with pytest.raises(ValueError):
        ev.merge_final(pa, ev.Population(pb.members[:-4]), config, BOUNDS)


def test_population_jsonl_roundtrip(tmp_path, synthetic_tasks):
    result = ev.evolve_source(synthetic_tasks["german"], tiny_config(generations=1))
    path = tmp_path / "pop.jsonl"
    ev.write_population(result.pop_a, path)
    back = ev.read_population(path)
    assert [m.to_dict() for m in back.members] == [
        {**m.to_dict(), "ses_fraction": None, "ses_seed": None} for m in result.pop_a.members
    ]
    (tmp_path / "bad.jsonl").write_text('{"id": 1}\n')
    with pytest.raises(ValueError, match="bad.jsonl:1"):
        ev.read_population(tmp_path / "bad.jsonl")


def test_twin_pair_check_used_for_offspring():
    members, fit = scored_members(24)
    top, mid = ev.select_for_mating(members, fit)
    kids = ev.breed(top, mid, BOUNDS, 24, 9)
    by_id = {k.id: k for k in kids}
    for k in kids:
        sib = by_id[k.sibling_id]
        if k.zygosity == MZ:
            check_twin_pair(TwinPair(k.pair_id, MZ, k.genome, sib.genome))
