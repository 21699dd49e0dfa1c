"""Acceptance criteria, one test per criterion.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one
``ACCEPTANCE PASS/FAIL`` line per criterion.  Tolerances are pinned in the
assertions; a failure here is a contract violation, not a flaky test.
"""

import time

import numpy as np
import pytest

from glarisk import synth
from glarisk.boosting import (
    TrainConfig,
    feature_importance,
    load_model,
    logistic_grad_hess,
    predict_margin,
    predict_proba,
    save_model,
    train,
)
from glarisk.boosting.tree import LEAF
from glarisk.cli import main
from glarisk.evaluation import compute_metrics, run_ablation, split_train_val
from glarisk.features import (
    ModalityMask,
    build_matrix,
    encode_record,
    fit_schema,
)
from glarisk.records import (
    parse_biomarker_table,
    parse_clinical_record,
    serialize_clinical_record,
)

from conftest import SAMPLE_OCT_TABLE, make_record
from reference_booster import train_reference


def _report(name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    print(f"ACCEPTANCE {status}: {name}" + (f" ({detail})" if detail else ""))
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def synth_bundle(tmp_path_factory):
    """The bundled 2000-row synthetic dataset, in memory and on disk."""
    dataset = synth.generate(rows=2000, seed=42)
    out = tmp_path_factory.mktemp("synth_acceptance")
    paths = synth.write(dataset, out)
    return dataset, paths


def _compare_trees(engine_tree, ref_tree):
    """Walk both trees in lockstep; thresholds exact, gains within 1e-9."""
    stack = [(0, 0)]
    while stack:
        e, r = stack.pop()
        engine_leaf = engine_tree.feature[e] == LEAF
        ref_leaf = ref_tree.nodes[r].feature < 0
        if engine_leaf != ref_leaf:
            return f"structure differs at node pair ({e}, {r})"
        if engine_leaf:
            continue
        if int(engine_tree.feature[e]) != ref_tree.nodes[r].feature:
            return (f"feature {engine_tree.feature[e]} != "
                    f"{ref_tree.nodes[r].feature} at node {e}")
        if float(engine_tree.threshold[e]) != ref_tree.nodes[r].threshold:
            return (f"threshold {engine_tree.threshold[e]!r} != "
                    f"{ref_tree.nodes[r].threshold!r} at node {e}")
        if abs(float(engine_tree.gain[e]) - ref_tree.nodes[r].gain) > 1e-9:
            return f"gain differs by more than 1e-9 at node {e}"
        stack.append((int(engine_tree.left[e]), ref_tree.nodes[r].left))
        stack.append((int(engine_tree.right[e]), ref_tree.nodes[r].right))
    return None


def test_oracle_equivalence_on_random_datasets():
    """Histogram splits == exact greedy when bins cover every distinct value."""
    started = time.time()
    rng = np.random.Generator(np.random.PCG64(2024))
    for ds in range(50):
        n = int(rng.integers(40, 201))
        d = int(rng.integers(2, 9))
        X = rng.normal(size=(n, d))
        int_cols = rng.choice(d, size=max(1, d // 3), replace=False)
        for j in int_cols:
            X[:, j] = rng.integers(0, 7, size=n).astype(float)
        w = rng.normal(size=d)
        y = ((X @ w + 0.5 * rng.standard_normal(n)) > 0).astype(int)
        if len(np.unique(y)) < 2:
            y[0] = 1 - y[0]
        depth = int(rng.integers(1, 4))
        lr = float(rng.uniform(0.1, 0.4))
        lam = float(rng.choice([0.5, 1.0]))
        gamma = float(rng.choice([0.0, 0.05]))
        mcw = float(rng.choice([0.0, 1.0]))
        config = TrainConfig(learning_rate=lr, max_depth=depth, n_estimators=10,
                             subsample=1.0, colsample=1.0, n_bins=256,
                             lambda_l2=lam, gamma_split=gamma,
                             min_child_weight=mcw, seed=int(rng.integers(1e6)))
        model = train(X, y, config)
        ref = train_reference(X, y, n_rounds=10, max_depth=depth,
                              learning_rate=lr, lam=lam, gamma=gamma, mcw=mcw)
        assert len(model.trees) == len(ref.trees)
        for t, (etree, rtree) in enumerate(zip(model.trees, ref.trees)):
            problem = _compare_trees(etree, rtree)
            assert problem is None, f"dataset {ds}, tree {t}: {problem}"
        gap = np.max(np.abs(predict_margin(model, X) - ref.predict_margin(X)))
        assert gap <= 1e-9, f"dataset {ds}: prediction gap {gap}"
    elapsed = time.time() - started
    _report("oracle equivalence (50 random datasets)", elapsed < 60,
            f"{elapsed:.1f}s, limit 60s")


def test_gradient_matches_finite_differences():
    """g, h of the logistic loss vs central differences, 1000 samples, <1s."""
    import mpmath

    mpmath.mp.dps = 50
    step = mpmath.mpf("1e-5")

    def loss(margin, y):
        p = 1 / (1 + mpmath.e ** (-margin))
        return -(y * mpmath.log(p) + (1 - y) * mpmath.log(1 - p))

    rng = np.random.Generator(np.random.PCG64(7))
    started = time.time()
    worst_g = worst_h = 0.0
    for _ in range(1000):
        m = mpmath.mpf(float(rng.uniform(-8, 8)))
        y = int(rng.integers(0, 2))
        g, h = logistic_grad_hess(float(m), y)
        g_fd = float((loss(m + step, y) - loss(m - step, y)) / (2 * step))
        h_fd = float((loss(m + step, y) - 2 * loss(m, y) + loss(m - step, y))
                     / step ** 2)
        worst_g = max(worst_g, abs(g - g_fd))
        worst_h = max(worst_h, abs(h - h_fd))
    elapsed = time.time() - started
    ok = worst_g < 1e-6 and worst_h < 1e-6 and elapsed < 1.0
    _report("gradient finite-difference check", ok,
            f"max |dg|={worst_g:.2e}, max |dh|={worst_h:.2e}, {elapsed:.2f}s")


def test_cmd_train_determinism(synth_bundle, tmp_path):
    """cmd_train twice with seed 42 -> byte-identical models, threads included."""
    _, paths = synth_bundle
    blobs = []
    for name, threads in (("m1.json", "1"), ("m2.json", "1"), ("m3.json", "4")):
        out = tmp_path / name
        code = main(["train", str(paths["records"]),
                     "--text-embeddings", str(paths["text"]),
                     "--image-embeddings", str(paths["image"]),
                     "--seed", "42", "--n_threads", threads,
                     "--out", str(out)])
        assert code == 0
        blobs.append(out.read_bytes())
    ok = blobs[0] == blobs[1] == blobs[2]
    _report("cmd_train determinism (reruns and internal parallelism)", ok)


def test_synthetic_end_to_end(synth_bundle):
    """Reference hyperparameters reach the accuracy bars; ablation ordering."""
    started = time.time()
    dataset, _ = synth_bundle
    records = list(dataset.records)
    schema = fit_schema(records)

    def build(mask):
        return build_matrix(records, schema, mask,
                            text_table=dataset.text_table,
                            image_table=dataset.image_table)

    config = TrainConfig()  # lr 0.05, depth 6, 100 rounds, 0.9/0.8, seed 42
    split = split_train_val(records, 0.2, seed=42, stratify=True)
    matrix = build(ModalityMask.full())
    index = {rid: i for i, rid in enumerate(matrix.ids)}
    tr = np.array([index[i] for i in split[0]])
    va = np.array([index[i] for i in split[1]])
    model = train(matrix.X[tr], matrix.y[tr], config, feature_names=matrix.names)
    acc_train = compute_metrics(predict_proba(model, matrix.X[tr]), matrix.y[tr]).acc
    acc_val = compute_metrics(predict_proba(model, matrix.X[va]), matrix.y[va]).acc
    _report("synthetic end-to-end training accuracy >= 0.99",
            acc_train >= 0.99, f"train acc {acc_train:.4f}")
    _report("synthetic end-to-end validation accuracy >= 0.95",
            acc_val >= 0.95, f"val acc {acc_val:.4f}")

    masks = [ModalityMask.full(), ModalityMask(factor=True),
             ModalityMask(words=True),
             ModalityMask(factor=True, risk=True, sure=True)]
    grid = run_ablation(build, masks, config, split)
    accs = {row.mask.label(): row.metrics.acc for row in grid.rows}
    all_acc = accs["image+words+factor+risk+sure"]
    factor_acc = accs["factor"]
    words_acc = accs["words"]
    judged_acc = accs["factor+risk+sure"]
    _report("ablation ordering all >= factor-only >= words-only",
            all_acc >= factor_acc >= words_acc,
            f"all {all_acc:.4f}, factor {factor_acc:.4f}, words {words_acc:.4f}")
    _report("risk+sure never costs factor-only more than 0.5 points",
            judged_acc >= factor_acc - 0.005,
            f"factor+risk+sure {judged_acc:.4f} vs factor {factor_acc:.4f}")
    elapsed = time.time() - started
    _report("synthetic end-to-end runtime < 5 min", elapsed < 300,
            f"{elapsed:.0f}s")


def test_importance_sanity():
    """A label-determining feature dominates gain importance."""
    rng = np.random.Generator(np.random.PCG64(5))
    X = rng.normal(size=(400, 10))
    y = (X[:, 4] > 0).astype(int)
    model = train(X, y, TrainConfig(n_estimators=30, max_depth=3))
    importance = feature_importance(model, "gain")
    ranked = sorted(importance.items(), key=lambda kv: -kv[1])
    ok = ranked[0][0] == "f4" and ranked[0][1] >= 0.9
    _report("planted feature ranked first with gain share >= 0.9", ok,
            f"top {ranked[0][0]} share {ranked[0][1]:.3f}")
    for kind in ("gain", "weight", "cover"):
        total = sum(feature_importance(model, kind).values())
        assert abs(total - 1.0) <= 1e-9, kind
    _report("importance maps sum to 1 within 1e-9", True)


def test_metrics_arithmetic():
    """Brute-force confusion recount on 1000 random cases, plus the fixture."""
    rng = np.random.Generator(np.random.PCG64(11))
    for _ in range(1000):
        n = int(rng.integers(1, 60))
        probs = rng.random(n)
        labels = rng.integers(0, 2, size=n)
        threshold = float(rng.random())
        m = compute_metrics(probs, labels, threshold)
        tp = fp = fn = tn = 0
        for p, label in zip(probs, labels):
            pred = 1 if p >= threshold else 0
            tp += pred and label
            fp += pred and not label
            fn += (not pred) and label
            tn += (not pred) and (not label)
        assert m.acc == (tp + tn) / n
        pre = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * pre * rec / (pre + rec) if pre + rec else 0.0
        assert m.pre == pre
        assert abs(m.f1 - f1) < 1e-15
    fixed = compute_metrics(
        np.array([0.9, 0.8, 0.7, 0.4, 0.1, 0.2, 0.3, 0.2, 0.1, 0.05]),
        np.array([1, 1, 0, 1, 0, 0, 0, 0, 0, 0]))
    ok = (fixed.acc == pytest.approx(0.8)
          and fixed.pre == pytest.approx(2 / 3)
          and fixed.f1 == pytest.approx(2 / 3))
    _report("metrics arithmetic (1000 recounts + fixed example)", ok,
            f"ACC {fixed.acc:.3f} PRE {fixed.pre:.4f} F1 {fixed.f1:.4f}")


def test_encoding_invariants_bulk():
    """10,000 randomized records: stable dimension, one-hot partition,
    unknown-category robustness, text round-trips, exact tri-state codes."""
    rng = np.random.Generator(np.random.PCG64(17))
    base = [
        make_record("b0", size="large", cdr=0.9, color="pale", pallor=True,
                    risk="high risk", confidence=0.9, label=1,
                    narrative="thin rim"),
        make_record("b1", size="small", cdr=0.2, color="pink", pallor=False,
                    risk="very healthy", confidence=0.5, label=0,
                    narrative="healthy rim"),
    ]
    schema = fit_schema(base)
    sizes = [None, "small", "normal", "large"]
    colors = [None, "pale", "pink", "never-seen-color"]
    risks = [None, "high risk", "very healthy", "unseen risk text"]
    flags = [None, True, False]
    dims = set()
    for i in range(10_000):
        record = make_record(
            f"r{i}",
            size=sizes[rng.integers(0, 4)],
            cdr=None if rng.random() < 0.2 else float(rng.random()),
            pallor=flags[rng.integers(0, 3)],
            thinning=flags[rng.integers(0, 3)],
            color=colors[rng.integers(0, 4)],
            risk=risks[rng.integers(0, 4)],
            confidence=None if rng.random() < 0.3 else float(rng.random()),
            label=int(rng.integers(0, 2)),
            narrative=None if rng.random() < 0.5 else "rim note",
        )
        blocks = encode_record(record, schema)
        struct, human = blocks["struct"], blocks["human"]
        dims.add((len(struct.values), len(human.values)))
        got = dict(zip(struct.names, struct.values))
        for field in ("optic_disc_size", "rim_color", "rim_pallor",
                      "rim_thinning", "cup_to_disc_ratio_gt0.6"):
            slots = [v for n, v in got.items() if n.startswith(field + "=")]
            assert sum(slots) == 1.0 and set(slots) <= {0.0, 1.0}, field
        hgot = dict(zip(human.names, human.values))
        risk_slots = [v for n, v in hgot.items()
                      if n.startswith("glaucoma_risk_assessment=")]
        assert sum(risk_slots) == 1.0
        reparsed = parse_clinical_record(serialize_clinical_record(record))
        assert reparsed == record
    ok = dims == {(schema.struct_dim, schema.human_dim)}
    _report("encoding invariants over 10,000 randomized records", ok,
            f"dims {sorted(dims)}")

    oct_schema = fit_schema(parse_biomarker_table(SAMPLE_OCT_TABLE), "tristate")
    from glarisk.features import encode_tristate
    block = encode_tristate(parse_biomarker_table(SAMPLE_OCT_TABLE)[0].measurements,
                            oct_schema)
    codes = {n: v for n, v in zip(block.names, block.values) if n.endswith(":code")}
    ok = set(codes.values()) == {0.0, 0.5, 1.0}
    _report("tri-state coding maps exactly {1.0, 0.5, 0.0}", ok,
            f"observed {sorted(set(codes.values()))}")


def test_model_persistence_bit_identical(tmp_path):
    """save -> load -> predict identical to the in-memory model, 1000 probes."""
    rng = np.random.Generator(np.random.PCG64(23))
    X = rng.normal(size=(300, 12))
    X[rng.random(X.shape) < 0.05] = np.nan
    y = (np.nan_to_num(X[:, 0]) + np.nan_to_num(X[:, 3]) > 0).astype(int)
    model = train(X, y, TrainConfig(n_estimators=40), schema_fingerprint="acc")
    path = tmp_path / "model.json"
    save_model(model, path)
    again = load_model(path)
    probes = rng.normal(size=(1000, 12))
    probes[rng.random(probes.shape) < 0.08] = np.nan
    diff = np.max(np.abs(predict_proba(model, probes) - predict_proba(again, probes)))
    _report("model persistence bit-identical over 1000 vectors", diff == 0.0,
            f"max abs diff {diff}")
