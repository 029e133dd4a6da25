"""Acceptance gate: one test per release criterion.

Each test prints a single CRITERION line on success so a verbose run reads
as a checklist. Heavy end-to-end fixtures are module-scoped and shared.
Oracles are written from the definitions with plain loops, independent of
the library kernels they check.
"""

import math
import time

import numpy as np
import pytest
import torch

from ctfas import (
    GeneratorConfig,
    Scenario,
    SpoofDetector,
    TrainConfig,
    generate_synthetic_dataset,
)
from ctfas.data import datasets_equal, read_dataset, write_dataset
from ctfas.losses import (
    loss_ce,
    loss_cf,
    loss_ct,
    loss_it,
    loss_md,
    loss_ms,
)
from ctfas.metrics import apcer_bpcer_acer, auc, confusion, Confusion
from ctfas.modalities import MODALITIES, TRANSITION_PAIRS, AttackType, Modality
from ctfas.prototypes import PrototypeStore, prototype_transitions
from ctfas.scoring import (
    TestProtocol,
    batch_scores,
    score_ood,
    youden_threshold,
)
from ctfas.trainer import TABLE_ROWS, Checkpoint, ablate, evaluate, train
from ctfas.transitions import (
    average_transition_correlation,
    cosine_similarity,
    pearson,
    correlation_report,
)

EPS = 1e-8


def ok(line: str) -> None:
    print(f"\n{line}", flush=True)


# ---------------------------------------------------------------------------
# shared end-to-end fixtures (seed 42, 2000 train / 500 test, 50 epochs)

E2E_TRAIN = GeneratorConfig(n_live=1000, n_spoof=1000, seed=42)
E2E_TEST = GeneratorConfig(n_live=250, n_spoof=250, seed=42)


@pytest.fixture(scope="module")
def e2e_train_ds():
    return generate_synthetic_dataset(E2E_TRAIN, "train")


@pytest.fixture(scope="module")
def e2e_test_ds():
    return generate_synthetic_dataset(E2E_TEST, "test")


@pytest.fixture(scope="module")
def fixed_run(e2e_train_ds):
    config = TrainConfig(scenario=Scenario.FIXED_MODAL, seed=42)
    started = time.monotonic()
    ckpt = train(config, e2e_train_ds)
    return ckpt, time.monotonic() - started


# ---------------------------------------------------------------------------
# criterion 1: correlation kernels vs brute force


def brute_cosine(a, b):
    num = sum(float(x) * float(y) for x, y in zip(a, b))
    na = math.sqrt(sum(float(x) * float(x) for x in a))
    nb = math.sqrt(sum(float(y) * float(y) for y in b))
    if na < EPS or nb < EPS:
        return 0.0
    return max(-1.0, min(1.0, num / (na * nb)))


def brute_pearson(a, b):
    d = len(a)
    ma = sum(float(x) for x in a) / d
    mb = sum(float(y) for y in b) / d
    cov = sum((float(x) - ma) * (float(y) - mb) for x, y in zip(a, b)) / d
    va = sum((float(x) - ma) ** 2 for x in a) / d
    vb = sum((float(y) - mb) ** 2 for y in b) / d
    if va < EPS or vb < EPS:
        return 0.0
    return max(-1.0, min(1.0, cov / math.sqrt(va * vb)))


def test_criterion_01_correlation_kernels_match_brute_force():
    started = time.monotonic()
    rng = np.random.default_rng(101)
    worst_c = worst_p = 0.0
    for _ in range(1000):
        d = int(rng.integers(2, 65))
        a = rng.standard_normal(d) * float(rng.uniform(0.1, 10.0))
        b = rng.standard_normal(d) * float(rng.uniform(0.1, 10.0))
        worst_c = max(worst_c, abs(cosine_similarity(a, b) - brute_cosine(a, b)))
        worst_p = max(worst_p, abs(pearson(a, b) - brute_pearson(a, b)))
    assert worst_c <= 1e-10
    assert worst_p <= 1e-10

    worst_t = 0.0
    for n in (2, 3, 5, 10, 25, 50):
        samples = [{m: rng.standard_normal(16) for m in MODALITIES} for _ in range(n)]
        for pair in TRANSITION_PAIRS:
            got = average_transition_correlation(samples, pair)
            trans = [s[pair.target] - s[pair.source] for s in samples]
            acc = 0.0
            for i in range(n):
                for j in range(n):
                    if i != j:
                        acc += brute_pearson(trans[i], trans[j])
            worst_t = max(worst_t, abs(got - acc / (n * (n - 1))))
    assert worst_t <= 1e-12

    elapsed = time.monotonic() - started
    assert elapsed < 5.0
    ok(
        "CRITERION 1 PASS: pearson/cosine within 1e-10 of brute force on 1000 pairs"
        f" (worst {max(worst_c, worst_p):.2e}), transition average within 1e-12"
        f" (worst {worst_t:.2e}), {elapsed:.2f}s"
    )


# ---------------------------------------------------------------------------
# criterion 2: analytic gradients vs central finite differences


def _grad_setup(seed):
    rng = np.random.default_rng(seed)
    d = 16

    def feats(n):
        return {
            m: torch.tensor(rng.standard_normal((n, d)), dtype=torch.float64,
                            requires_grad=True)
            for m in MODALITIES
        }

    live, spoof, aux = feats(4), feats(4), feats(4)
    store = PrototypeStore(dim=d, dtype=torch.float64)
    store.ema_update(
        {m: torch.tensor(rng.standard_normal(d), dtype=torch.float64) for m in MODALITIES}
    )
    logits = {
        m: torch.tensor(rng.standard_normal((8, 2)), dtype=torch.float64,
                        requires_grad=True)
        for m in MODALITIES
    }
    labels = torch.tensor([0, 0, 0, 0, 1, 1, 1, 1])
    return live, spoof, aux, store, logits, labels, rng


def _check_gradients(name, fn, inputs, rng, h=1e-3, tol=1e-4):
    """Central finite differences on 5 random coordinates of the inputs."""
    value = fn()
    grads = torch.autograd.grad(value, inputs, allow_unused=True)
    worst = 0.0
    for _ in range(5):
        which = int(rng.integers(len(inputs)))
        tensor, grad = inputs[which], grads[which]
        idx = tuple(int(rng.integers(s)) for s in tensor.shape)
        analytic = 0.0 if grad is None else float(grad[idx])
        with torch.no_grad():
            orig = float(tensor[idx])
            tensor[idx] = orig + h
            plus = float(fn())
            tensor[idx] = orig - h
            minus = float(fn())
            tensor[idx] = orig
        numeric = (plus - minus) / (2.0 * h)
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
        worst = max(worst, rel)
        assert rel <= tol, f"{name}: coord {idx} analytic {analytic} vs fd {numeric}"
    return worst


def test_criterion_02_gradients_match_finite_differences():
    started = time.monotonic()
    live, spoof, aux, store, logits, labels, rng = _grad_setup(202)
    worst = {}
    worst["ms"] = _check_gradients(
        "ms", lambda: loss_ms(live), [live[m] for m in MODALITIES], rng
    )
    worst["ct"] = _check_gradients(
        "ct", lambda: loss_ct(live, store), [live[m] for m in MODALITIES], rng
    )
    worst["md"] = _check_gradients(
        "md", lambda: loss_md(spoof, store), [spoof[m] for m in MODALITIES], rng
    )
    worst["it"] = _check_gradients(
        "it", lambda: loss_it(spoof, store), [spoof[m] for m in MODALITIES], rng
    )
    worst["cf"] = _check_gradients(
        "cf",
        lambda: loss_cf(live, aux),
        [live[m] for m in MODALITIES] + [aux[m] for m in MODALITIES],
        rng,
    )
    worst["ce"] = _check_gradients(
        "ce",
        lambda: sum(loss_ce(logits, labels).values()),
        [logits[m] for m in MODALITIES],
        rng,
    )
    elapsed = time.monotonic() - started
    assert elapsed < 30.0
    summary = "  ".join(f"{k}={v:.1e}" for k, v in worst.items())
    ok(
        "CRITERION 2 PASS: all six loss terms match central differences within"
        f" rel. err. 1e-4 ({summary}), {elapsed:.2f}s"
    )


# ---------------------------------------------------------------------------
# criterion 3: vectorized losses vs nested-loop oracles


def test_criterion_03_loss_oracle_equivalence():
    rng = np.random.default_rng(303)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 9))
        d = int(rng.integers(3, 10))
        live = {
            m: torch.tensor(rng.standard_normal((n, d)), dtype=torch.float64)
            for m in MODALITIES
        }
        spoof = {
            m: torch.tensor(rng.standard_normal((n, d)), dtype=torch.float64)
            for m in MODALITIES
        }
        aux = {
            m: torch.tensor(rng.standard_normal((n, d)), dtype=torch.float64)
            for m in MODALITIES
        }
        store = PrototypeStore(dim=d, dtype=torch.float64)
        store.ema_update(
            {m: torch.tensor(rng.standard_normal(d), dtype=torch.float64)
             for m in MODALITIES}
        )

        # modality-specific contrastive
        acc = 0.0
        for m1 in MODALITIES:
            negatives = [
                live[m2][k].numpy()
                for m2 in MODALITIES
                if m2 is not m1
                for k in range(n)
            ]
            for i in range(n):
                anchor = live[m1][i].numpy()
                lse = math.log(
                    sum(math.exp(brute_cosine(anchor, x)) for x in negatives)
                )
                for j in range(n):
                    if i != j:
                        acc += -brute_cosine(anchor, live[m1][j].numpy()) + lse
        worst = max(worst, abs(loss_ms(live).item() - acc))

        # transition consistency over live samples
        acc = 0.0
        for i in range(n):
            for pair in TRANSITION_PAIRS:
                t = (live[pair.target][i] - live[pair.source][i]).numpy()
                p = (store.get(pair.target) - store.get(pair.source)).numpy()
                acc += 1.0 - brute_pearson(t, p)
        worst = max(worst, abs(loss_ct(live, store).item() - acc))

        # spoof-vs-prototype cosine
        acc = 0.0
        for i in range(n):
            for m in MODALITIES:
                acc += brute_cosine(store.get(m).numpy(), spoof[m][i].numpy())
        worst = max(worst, abs(loss_md(spoof, store).item() - acc))

        # spoof transition alignment
        acc = 0.0
        for i in range(n):
            for pair in TRANSITION_PAIRS:
                t = (spoof[pair.target][i] - spoof[pair.source][i]).numpy()
                p = (store.get(pair.target) - store.get(pair.source)).numpy()
                acc += brute_pearson(p, t)
        worst = max(worst, abs(loss_it(spoof, store).item() - acc))

        # auxiliary alignment over live and spoof rows alike
        acc = 0.0
        for i in range(n):
            for m in (Modality.IR, Modality.DEPTH):
                acc += 1.0 - brute_cosine(live[m][i].numpy(), aux[m][i].numpy())
        worst = max(worst, abs(loss_cf(live, aux).item() - acc))

    assert worst <= 1e-10
    ok(
        "CRITERION 3 PASS: five summed loss forms equal nested-loop oracles on"
        f" 100 random batches (worst |diff| {worst:.2e} <= 1e-10)"
    )


# ---------------------------------------------------------------------------
# criterion 4: prototype EMA invariants


def dyadic(rng, dim, scale=2**-20):
    """Random vectors on a dyadic lattice: IEEE arithmetic on them is exact."""
    return torch.tensor(
        rng.integers(-(2**20), 2**20, size=dim) * scale, dtype=torch.float64
    )


def test_criterion_04_prototype_invariants_exact():
    rng = np.random.default_rng(404)
    dim = 24

    # convexity: the update equals the independently computed combination
    store = PrototypeStore(dim=dim, gamma=0.3, dtype=torch.float64)
    first = {m: torch.tensor(rng.standard_normal(dim), dtype=torch.float64) for m in MODALITIES}
    second = {m: torch.tensor(rng.standard_normal(dim), dtype=torch.float64) for m in MODALITIES}
    store.ema_update(first)
    store.ema_update(second)
    for m in MODALITIES:
        reference = (1.0 - 0.3) * first[m] + 0.3 * second[m]
        assert torch.equal(store.get(m), reference)
        lo = torch.minimum(first[m], second[m]) - 1e-12
        hi = torch.maximum(first[m], second[m]) + 1e-12
        assert bool((store.get(m) >= lo).all() and (store.get(m) <= hi).all())

    # gamma=1 boundary: the new means replace the old state bit-for-bit
    boundary = PrototypeStore(dim=dim, gamma=1.0, dtype=torch.float64)
    boundary.ema_update(first)
    boundary.ema_update(second)
    for m in MODALITIES:
        assert torch.equal(boundary.get(m), second[m])

    # fixed point on equal input, exact on the dyadic lattice with gamma=0.5
    for trial in range(50):
        fixed = PrototypeStore(dim=dim, gamma=0.5, dtype=torch.float64)
        state = {m: dyadic(rng, dim) for m in MODALITIES}
        fixed.ema_update(state)
        fixed.ema_update({m: state[m].clone() for m in MODALITIES})
        for m in MODALITIES:
            assert torch.equal(fixed.get(m), state[m])

    # transition telescoping: RGB->IR plus IR->DEPTH equals RGB->DEPTH, and
    # the cycle sums to zero, exactly on the lattice
    for trial in range(50):
        lattice = PrototypeStore(dim=dim, gamma=0.5, dtype=torch.float64)
        lattice.ema_update({m: dyadic(rng, dim) for m in MODALITIES})
        trans = prototype_transitions(lattice)
        ab, ac, bc = (
            trans[TRANSITION_PAIRS[0]],
            trans[TRANSITION_PAIRS[1]],
            trans[TRANSITION_PAIRS[2]],
        )
        assert torch.equal(ab + bc, ac)
        assert bool((ab + bc - ac == 0).all())

    ok(
        "CRITERION 4 PASS: EMA convexity, gamma=1 boundary, fixed point, and"
        " transition telescoping all hold exactly at 64-bit"
    )


# ---------------------------------------------------------------------------
# criterion 5: score identities and bounds


def test_criterion_05_score_identities_and_bounds():
    rng = np.random.default_rng(505)

    sc_d, sc_t = 1.7, 0.9
    assert score_ood(sc_d, sc_t, 0.0) == sc_t
    assert score_ood(sc_d, sc_t, 1.0) == sc_d

    dims = (2, 3, 8, 32)
    lo_d = hi_d = lo_t = hi_t = None
    draws = 0
    per_batch = 250
    while draws < 10_000:
        d = int(dims[draws // per_batch % len(dims)])
        store = PrototypeStore(dim=d, dtype=torch.float64)
        store.ema_update(
            {m: torch.tensor(rng.standard_normal(d), dtype=torch.float64)
             for m in MODALITIES}
        )
        feats = {
            m: torch.tensor(
                rng.standard_normal((per_batch, d)) * float(rng.uniform(0.1, 10)),
                dtype=torch.float64,
            )
            for m in MODALITIES
        }
        # sprinkle degenerate rows: zero features and prototype copies
        for m in MODALITIES:
            feats[m][0] = 0.0
            feats[m][1] = store.get(m)
        b_d, b_t = batch_scores(feats, store)
        assert b_d.min() >= 0.0 and b_d.max() <= 6.0
        assert b_t.min() >= 0.0 and b_t.max() <= 6.0
        lo_d = b_d.min() if lo_d is None else min(lo_d, b_d.min())
        hi_d = b_d.max() if hi_d is None else max(hi_d, b_d.max())
        lo_t = b_t.min() if lo_t is None else min(lo_t, b_t.min())
        hi_t = b_t.max() if hi_t is None else max(hi_t, b_t.max())
        draws += per_batch

    store = PrototypeStore(dim=16, dtype=torch.float64)
    store.ema_update(
        {m: torch.tensor(rng.standard_normal(16), dtype=torch.float64)
         for m in MODALITIES}
    )
    on_proto = {m: store.get(m).unsqueeze(0) for m in MODALITIES}
    z_d, z_t = batch_scores(on_proto, store)
    assert abs(float(z_d[0])) <= 1e-9 and abs(float(z_t[0])) <= 1e-9

    ok(
        "CRITERION 5 PASS: endpoints exact, scores within [0, 6] on 10,000 draws"
        f" (sc_d in [{lo_d:.3f}, {hi_d:.3f}], sc_t in [{lo_t:.3f}, {hi_t:.3f}]),"
        f" zero-point {max(abs(float(z_d[0])), abs(float(z_t[0]))):.1e}"
    )


# ---------------------------------------------------------------------------
# criterion 6: metrics vs brute force


def test_criterion_06_metric_oracles():
    rng = np.random.default_rng(606)

    worst_acer = 0.0
    for _ in range(200):
        c = Confusion(*(int(x) for x in rng.integers(1, 100, size=4)))
        apcer, bpcer, acer = apcer_bpcer_acer(c)
        worst_acer = max(worst_acer, abs(acer - (apcer + bpcer) / 2.0))
    assert worst_acer <= 1e-12

    checked = 0
    for _ in range(60):
        n = int(rng.integers(4, 501))
        labels = rng.integers(0, 2, size=n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        scores = np.round(rng.standard_normal(n), 1)  # coarse grid forces ties
        spoof = scores[labels == 1]
        live = scores[labels == 0]
        wins = ties = 0
        for s in spoof:
            for l in live:
                if s > l:
                    wins += 1
                elif s == l:
                    ties += 1
        expect = (wins + 0.5 * ties) / (spoof.size * live.size)
        assert auc(scores, labels) == expect
        checked += 1
    assert checked == 60

    def oracle_youden(scores, labels):
        uniq = np.unique(scores)
        cands = (
            [uniq[0] - 1.0]
            + [0.5 * (x + y) for x, y in zip(uniq[:-1], uniq[1:])]
            + [uniq[-1] + 1.0]
        )
        best_j, best_t = -np.inf, None
        for t in cands:
            spoofy = scores >= t
            sens = float(((labels == 1) & spoofy).sum()) / (labels == 1).sum()
            spec = float(((labels == 0) & ~spoofy).sum()) / (labels == 0).sum()
            if sens + spec - 1.0 > best_j:
                best_j, best_t = sens + spec - 1.0, t
        return best_t

    for _ in range(200):
        n = int(rng.integers(4, 80))
        labels = rng.integers(0, 2, size=n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        scores = np.round(rng.standard_normal(n), 1)
        assert youden_threshold(scores, labels) == oracle_youden(scores, labels)

    ok(
        "CRITERION 6 PASS: AUC equals Mann-Whitney counting exactly (60 sets,"
        " n<=500, with ties), ACER identity <=1e-12, Youden threshold matches"
        " exhaustive sweep on 200 sets"
    )


# ---------------------------------------------------------------------------
# criterion 7: end-to-end fixed-modal quality


@pytest.mark.slow
def test_criterion_07_end_to_end_fixed_modal(fixed_run, e2e_test_ds):
    ckpt, train_seconds = fixed_run
    report = evaluate(ckpt, e2e_test_ds, "P4")
    assert report.acer <= 0.05
    assert report.auc >= 0.98
    assert train_seconds <= 600.0
    ok(
        f"CRITERION 7 PASS: fixed-modal P4 ACER {report.acer:.4f} <= 0.05, AUC"
        f" {report.auc:.4f} >= 0.98 (trained in {train_seconds:.0f}s)"
    )


# ---------------------------------------------------------------------------
# criterion 8: end-to-end missing-modal degradation pattern


@pytest.mark.slow
def test_criterion_08_missing_modal_protocol_ordering(e2e_train_ds, e2e_test_ds):
    protocols = ("P1", "P2", "P3", "P4")
    per_seed = {}
    for seed in (42, 43, 44):
        config = TrainConfig(scenario=Scenario.MISSING_MODAL, seed=seed)
        ckpt = train(config, e2e_train_ds)
        per_seed[seed] = {p: evaluate(ckpt, e2e_test_ds, p).acer for p in protocols}

    assert per_seed[42]["P1"] <= 0.15

    ordered = 0
    for seed, acers in per_seed.items():
        if acers["P4"] <= min(acers["P2"], acers["P3"]) and max(
            acers["P2"], acers["P3"]
        ) <= acers["P1"]:
            ordered += 1
    assert ordered >= 2, f"ordering held on {ordered}/3 seeds: {per_seed}"

    lines = "; ".join(
        f"seed {seed}: " + " ".join(f"{p}={acers[p]:.3f}" for p in protocols)
        for seed, acers in per_seed.items()
    )
    ok(
        f"CRITERION 8 PASS: P1 ACER {per_seed[42]['P1']:.4f} <= 0.15 and"
        f" P4<=P2/P3<=P1 on {ordered}/3 seeds ({lines})"
    )


# ---------------------------------------------------------------------------
# criterion 9: ablation direction


@pytest.mark.slow
def test_criterion_09_ablation_auc_ordering():
    mix = {AttackType.PRINT: 0.5, AttackType.REPLAY: 0.5, AttackType.MASK: 0.0}
    train_ds = generate_synthetic_dataset(
        GeneratorConfig(n_live=600, n_spoof=600, seed=7, attack_mix=mix,
                        rgb_attack_scale=0.25),
        "train",
    )
    test_ds = generate_synthetic_dataset(
        GeneratorConfig(n_live=200, n_spoof=200, seed=8, attack_mix=mix,
                        rgb_attack_scale=0.25),
        "test",
    )
    rows3 = [TABLE_ROWS[0], TABLE_ROWS[1], TABLE_ROWS[-1]]

    ordered = 0
    results = {}
    for seed in (0, 1, 2):
        config = TrainConfig(scenario=Scenario.MISSING_MODAL, seed=seed, epochs=15)
        rows = ablate(config, train_ds, test_ds, term_masks=rows3, protocol="P1")
        aucs = [r.report.auc for r in rows]
        results[seed] = aucs
        if aucs[0] < aucs[1] < aucs[2]:
            ordered += 1
    assert ordered >= 2, f"AUC ordering held on {ordered}/3 seeds: {results}"

    lines = "; ".join(
        f"seed {s}: CE={a[0]:.3f} CE+CF={a[1]:.3f} full={a[2]:.3f}"
        for s, a in results.items()
    )
    ok(
        f"CRITERION 9 PASS: AUC(CE) < AUC(CE+CF) < AUC(full) at P1 on"
        f" {ordered}/3 seeds ({lines})"
    )


# ---------------------------------------------------------------------------
# criterion 10: correlation analysis direction


@pytest.mark.slow
def test_criterion_10_correlation_analysis_direction(fixed_run, e2e_test_ds):
    ckpt, _ = fixed_run
    report = correlation_report(e2e_test_ds, ckpt.net, ckpt.store)

    for m in MODALITIES:
        live = report.means[f"cosine_{m.value}_live"]
        spoof = report.means[f"cosine_{m.value}_spoof"]
        assert live > spoof, f"{m}: live {live} vs spoof {spoof}"

    gaps = {}
    for pair in (TRANSITION_PAIRS[1], TRANSITION_PAIRS[2]):  # RGB->D, IR->D
        key = f"transition_{pair.source.value}_{pair.target.value}"
        gaps[key] = report.means[f"{key}_live"] - report.means[f"{key}_spoof"]
        assert gaps[key] >= 0.1, f"{key}: gap {gaps[key]}"

    shown = "  ".join(f"{k} gap {v:.3f}" for k, v in gaps.items())
    ok(
        "CRITERION 10 PASS: within-live cosine exceeds within-spoof for all"
        f" modalities; prototype-transition correlation gaps {shown} (>= 0.1)"
    )


# ---------------------------------------------------------------------------
# criterion 11: determinism and round-trips


def test_criterion_11_determinism_and_round_trips(tmp_path):
    config = TrainConfig(
        scenario=Scenario.MISSING_MODAL, epochs=3, batch_size=16,
        feature_dim=16, channels=(8, 16), seed=77,
    )
    data = generate_synthetic_dataset(
        GeneratorConfig(n_live=24, n_spoof=24, image_side=16, seed=19), "train"
    )

    a = train(config, data)
    b = train(config, data)
    for (na, pa), (nb, pb) in zip(
        sorted(a.net.named_parameters()), sorted(b.net.named_parameters())
    ):
        assert na == nb
        assert torch.equal(pa, pb), f"parameter {na} differs between same-seed runs"
    for m in MODALITIES:
        assert torch.equal(a.store.get(m), b.store.get(m))
    assert a.thresholds == b.thresholds

    ds_dir = tmp_path / "dataset"
    write_dataset(data, ds_dir)
    assert datasets_equal(read_dataset(ds_dir), data)

    ckpt_dir = tmp_path / "ckpt"
    a.save(ckpt_dir)
    loaded = Checkpoint.load(ckpt_dir)
    assert loaded.config == a.config
    assert loaded.thresholds == a.thresholds
    for (na, pa), (nb, pb) in zip(
        sorted(a.net.named_parameters()), sorted(loaded.net.named_parameters())
    ):
        assert na == nb
        assert torch.equal(pa, pb), f"parameter {na} differs after reload"
    for m in MODALITIES:
        assert torch.equal(loaded.store.get(m), a.store.get(m))

    # a second save of the loaded state reproduces the files byte for byte
    ckpt_dir2 = tmp_path / "ckpt2"
    loaded.save(ckpt_dir2)
    for name in ("params.bin", "prototypes.bin", "val_scores.bin", "config.json"):
        assert (ckpt_dir / name).read_bytes() == (ckpt_dir2 / name).read_bytes(), name

    ok(
        "CRITERION 11 PASS: same-seed training is bit-identical; dataset and"
        " checkpoint round-trips are exact (double-save byte-equal)"
    )
