"""Command-line pipelines: simulate, estimate, ffchain, bounds, detect,
export-plotdata.

All commands read an optional JSON config (flags override keys), route all
randomness through one root seed, and write plot-ready CSV/JSON.  Exit
codes: 0 success, 2 validation error, 3 flagged-invalid primary output
under ``--strict``.
"""

from __future__ import annotations

import json
import math
import sys
from dataclasses import asdict
from pathlib import Path

import click
import numpy as np

from . import bounds as bounds_mod
from . import dataio, exact, ffchain, quench, shadows
from .dataio import RunConfig, ValidationError

EXIT_INVALID = 3


def _fail_validation(exc: Exception) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(2)


def _clean(obj: dict) -> dict:
    """JSON-safe copy: numpy scalars unboxed, non-finite floats to null."""
    out = {}
    for k, v in obj.items():
        if isinstance(v, np.bool_):
            v = bool(v)
        elif isinstance(v, (np.floating, np.integer)):
            v = v.item()
        if isinstance(v, float) and not math.isfinite(v):
            v = None
        out[k] = v
    return out


def _load_config(config_path, **overrides) -> RunConfig:
    try:
        return RunConfig.from_file(config_path, **overrides).validate()
    except (ValidationError, TypeError, json.JSONDecodeError) as exc:
        _fail_validation(exc)


def _build_state(cfg: RunConfig, t: float) -> quench.QuenchState:
    n = cfg.n_qubits
    if cfg.state == "ghz":
        psi = np.zeros(2**n, dtype=complex)
        psi[0] = psi[-1] = 1 / np.sqrt(2)
        return quench.QuenchState(np.outer(psi, psi.conj()), t)
    if cfg.state == "bell":
        if n != 2:
            raise ValidationError("bell state needs n_qubits = 2", field_name="state")
        psi = np.zeros(4, dtype=complex)
        psi[0] = psi[3] = 1 / np.sqrt(2)
        return quench.QuenchState(np.outer(psi, psi.conj()), t)
    if cfg.state == "neel":
        return quench.neel_state(n)
    spec = quench.HamiltonianSpec(n, cfg.j0, cfg.alpha_pow, cfg.field_b)
    state = quench.evolve(spec, quench.neel_state(n), t)
    if cfg.p_dp:
        state = quench.apply_depolarizing(state, cfg.p_dp)
    return state


@click.group()
def main():
    """Randomized-measurement simulation and operator-entanglement estimation."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None, help="JSON config file.")
@click.option("--seed", type=int, default=None, help="Root seed (required here or in the config).")
@click.option("--out", "out_dir", type=click.Path(), required=True, help="Output dataset directory.")
@click.option("--n-u", type=int, default=None, help="Number of random unitaries.")
@click.option("--n-m", type=int, default=None, help="Shots per unitary.")
@click.option("--ensemble", type=click.Choice(["pauli", "haar"]), default=None)
@click.option("--state", type=click.Choice(list(dataio.STATE_KINDS)), default=None)
@click.option("--times", type=str, default=None, help="Comma-separated times (units of 1/J0).")
def simulate(config_path, seed, out_dir, n_u, n_m, ensemble, state, times):
    """Sample randomized-measurement datasets plus an exact-value manifest."""
    overrides = dict(seed=seed, n_u=n_u, n_m=n_m, ensemble=ensemble, state=state)
    if times is not None:
        overrides["times"] = [float(x) for x in times.split(",")]
    cfg = _load_config(config_path, **overrides)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for idx, t in enumerate(cfg.times):
        try:
            st = _build_state(cfg, float(t))
        except ValidationError as exc:
            _fail_validation(exc)
        records = shadows.simulate_records(st, cfg.ensemble, cfg.n_u, cfg.n_m, [cfg.seed, idx])
        name = f"records_t{idx:03d}.jsonl"
        header = dataio.DatasetHeader(
            n_qubits=cfg.n_qubits,
            ensemble=cfg.ensemble,
            n_u=cfg.n_u,
            n_m=cfg.n_m,
            seed=cfg.seed,
            state={"kind": cfg.state, "j0": cfg.j0, "alpha_pow": cfg.alpha_pow,
                   "field_b": cfg.field_b, "p_dp": cfg.p_dp, "time_index": idx},
            time=float(t),
            time_unit=cfg.time_unit,
        )
        dataio.write_dataset(out / name, header, records)
        rho_red = dataio.reduce_to_partition(st.rho, cfg)
        entries.append({"time": float(t), "records": name,
                        "exact": dataio.exact_references(rho_red, cfg)})
        click.echo(f"t={t}: wrote {name} ({cfg.n_u * cfg.n_m} records)")
    dataio.write_manifest(out / "manifest.json", cfg, entries)
    click.echo(f"manifest: {out / 'manifest.json'}")


def _dataset_paths(data_path: Path) -> tuple[RunConfig | None, list[tuple[float, Path]]]:
    if data_path.is_dir():
        doc = dataio.read_manifest(data_path / "manifest.json")
        cfg = RunConfig(**doc["config"])
        return cfg, [(e["time"], data_path / e["records"]) for e in doc["times"]]
    return None, [(None, data_path)]


def _estimate_one(records, cfg: RunConfig):
    reg = dataio.reduced_register(cfg)
    charge = dataio.charge_for(cfg, reg)
    qubits = dataio.partition_qubits(cfg)
    oe_batches = shadows.make_batches(records, cfg.n_prime_oe, qubits=qubits)
    sr_batches = shadows.make_batches(records, cfg.n_prime_sroe, qubits=qubits)
    purity = shadows.estimate_purity(oe_batches)
    oe = shadows.estimate_renyi2_oe(oe_batches, reg)
    pops = shadows.estimate_all_populations(sr_batches, charge)
    sroe2 = {q: shadows.estimate_sroe2(sr_batches, charge, q) for q in cfg.q_list}
    return purity, oe, pops, sroe2


@main.command()
@click.option("--data", "data_path", type=click.Path(exists=True), required=True,
              help="Dataset directory (with manifest) or a single JSONL file.")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="Config for partition/estimator settings (defaults to the manifest's).")
@click.option("--out", "out_csv", type=click.Path(), required=True, help="Output CSV.")
@click.option("--strict", is_flag=True, help="Exit 3 if any primary estimate is flagged invalid.")
def estimate(data_path, config_path, out_csv, strict):
    """Batch-shadow estimates (purity, OE, sector weights/OE) per time."""
    data_path = Path(data_path)
    try:
        manifest_cfg, entries = _dataset_paths(data_path)
    except (ValidationError, FileNotFoundError, json.JSONDecodeError) as exc:
        _fail_validation(exc)
    if config_path is not None:
        cfg = _load_config(config_path)
    elif manifest_cfg is not None:
        cfg = manifest_cfg
    else:
        _fail_validation(ValidationError("single-file estimate needs --config"))
    any_invalid = False
    q_all = None
    rows = []
    for t, path in entries:
        try:
            header, records = dataio.read_dataset(path)
        except ValidationError as exc:
            _fail_validation(exc)
        if header.n_qubits != cfg.n_qubits or header.ensemble != cfg.ensemble:
            _fail_validation(ValidationError(f"dataset header does not match config for {path.name}"))
        purity, oe, pops, sroe2 = _estimate_one(records, cfg)
        if q_all is None:
            q_all = sorted(pops)
        row = [header.time if t is None else t,
               purity.value, purity.jackknife_error,
               oe.metadata["s2_unnormalized"], oe.metadata["r2"],
               oe.value, oe.jackknife_error, oe.valid]
        # sector weights share one denominator, so sum numerators first:
        # the column is exactly 1 whenever the purity moment is positive.
        den = pops[q_all[0]].metadata["moment2"]
        row.append(math.fsum(pops[q].metadata["numerator"] for q in q_all) / den)
        for q in q_all:
            row.extend([pops[q].value, pops[q].jackknife_error])
        for q in cfg.q_list:
            rep = sroe2[q]
            row.extend([rep.value, rep.jackknife_error, rep.valid])
            any_invalid = any_invalid or not rep.valid
        any_invalid = any_invalid or not oe.valid
        rows.append(row)
    header_cols = ["t", "purity", "purity_err", "s2_tilde", "r2", "s2_oe", "s2_oe_err", "s2_oe_valid", "sum_p"]
    for q in q_all:
        header_cols.extend([f"p_q{q}", f"p_q{q}_err"])
    for q in cfg.q_list:
        header_cols.extend([f"s2_q{q}", f"s2_q{q}_err", f"s2_q{q}_valid"])
    dataio.write_csv(out_csv, header_cols, rows)
    click.echo(f"wrote {out_csv} ({len(rows)} rows)")
    if strict and any_invalid:
        click.echo("flagged-invalid estimates present", err=True)
        sys.exit(EXIT_INVALID)


@main.command("ffchain")
@click.option("--n-sites", type=int, default=1024, show_default=True)
@click.option("--ell-a", type=int, default=120, show_default=True)
@click.option("--ell-b", type=int, default=136, show_default=True)
@click.option("--times", type=str, required=True, help="Comma-separated times or start:stop:step.")
@click.option("--q", "q_values", type=int, multiple=True, default=(0, 2, 4), show_default=True)
@click.option("--alpha", type=float, default=1.0, show_default=True, help="Renyi index.")
@click.option("--out", "out_csv", type=click.Path(), required=True)
def ffchain_cmd(n_sites, ell_a, ell_b, times, q_values, alpha, out_csv):
    """Lattice SROE curves with quasiparticle overlay columns."""
    try:
        spec = ffchain.ChainSpec(n_sites, ell_a, ell_b)
    except ValueError as exc:
        _fail_validation(exc)
    if ":" in times:
        start, stop, step = (float(x) for x in times.split(":"))
        ts = list(np.arange(start, stop, step))
    else:
        ts = [float(x) for x in times.split(",")]
    rows = []
    for t in ts:
        c = ffchain.quench_correlations(spec, t)[: spec.ell, : spec.ell]
        xi = ffchain.restricted_super_spectrum(c, ell_a)
        total = ffchain.total_oe_ff(xi, alpha)
        for q in q_values:
            try:
                s_q = ffchain.sroe_ff(xi, ell_a, ell_b, alpha, q)
                populated = True
            except ValueError:
                s_q, populated = None, False
            pred = ffchain.quasiparticle_prediction(
                ffchain.QuasiparticleParams(ell_a, ell_b, t, q, alpha)
            )
            rows.append([t, q, total, s_q, populated, pred.j_t, pred.s_q,
                         pred.s_q_saddle, pred.s_q_equipartition, pred.t_delay])
    dataio.write_csv(
        out_csv,
        ["t", "q", "total_oe", "s_q", "s_q_populated", "j_t",
         "s_q_predicted", "s_q_saddle", "s_q_equipartition", "t_delay"],
        rows,
    )
    click.echo(f"wrote {out_csv} ({len(rows)} rows)")


@main.command("bounds")
@click.option("--n-qubits", type=int, default=4, show_default=True)
@click.option("--m-grid", type=str, default="40,100,250,500,1000,2500,10000", show_default=True)
@click.option("--n-prime-grid", type=str, default="4,10,20,M", show_default=True)
@click.option("--repetitions", type=int, default=200, show_default=True)
@click.option("--ensembles", type=str, default="pauli,haar", show_default=True)
@click.option("--seed", type=int, required=True)
@click.option("--out", "out_csv", type=click.Path(), required=True)
def bounds_cmd(n_qubits, m_grid, n_prime_grid, repetitions, ensembles, seed, out_csv):
    """Empirical fourth-moment error sweep on a GHZ state."""
    psi = np.zeros(2**n_qubits, dtype=complex)
    psi[0] = psi[-1] = 1 / np.sqrt(2)
    state = quench.QuenchState(np.outer(psi, psi.conj()))
    from .linops import bipartite_register

    reg = bipartite_register(n_qubits // 2, n_qubits - n_qubits // 2)
    try:
        rows = bounds_mod.empirical_error_sweep(
            state, reg,
            m_grid=[int(x) for x in m_grid.split(",")],
            n_prime_grid=[x if x.upper() == "M" else int(x) for x in n_prime_grid.split(",")],
            repetitions=repetitions,
            seed=seed,
            ensembles=tuple(ensembles.split(",")),
        )
    except ValueError as exc:
        _fail_validation(exc)
    dataio.write_csv(
        out_csv,
        ["ensemble", "M", "n_prime", "mean_error", "std_error", "repetitions"],
        [[r.ensemble, r.m, r.n_prime_label, r.mean_error, r.std_error, r.repetitions] for r in rows],
    )
    click.echo(f"wrote {out_csv} ({len(rows)} rows)")


@main.command()
@click.option("--data", "data_path", type=click.Path(exists=True), default=None,
              help="Dataset file or directory for shadow-mode detection.")
@click.option("--statefile", type=click.Path(exists=True), default=None,
              help=".npy density matrix for exact-mode detection.")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--n-prime", type=int, default=4, show_default=True)
@click.option("--out", "out_json", type=click.Path(), default=None)
@click.option("--strict", is_flag=True)
def detect(data_path, statefile, config_path, n_prime, out_json, strict):
    """Entanglement detection: positive values certify entanglement."""
    if (data_path is None) == (statefile is None):
        _fail_validation(ValidationError("pass exactly one of --data or --statefile"))
    reports = []
    if statefile is not None:
        cfg = _load_config(config_path) if config_path else None
        rho = np.load(statefile)
        n = int(np.log2(rho.shape[0]))
        if cfg is None:
            from .linops import bipartite_register

            reg = bipartite_register(n // 2, n - n // 2)
        else:
            reg = dataio.reduced_register(cfg)
            rho = dataio.reduce_to_partition(rho, cfg)
        rep = shadows.detect_entanglement(rho=rho, reg=reg)
        reports.append({"time": None, **_clean(asdict(rep))})
    else:
        data_path = Path(data_path)
        try:
            manifest_cfg, entries = _dataset_paths(data_path)
        except (ValidationError, FileNotFoundError) as exc:
            _fail_validation(exc)
        cfg = _load_config(config_path) if config_path else manifest_cfg
        if cfg is None:
            _fail_validation(ValidationError("single-file detect needs --config"))
        reg = dataio.reduced_register(cfg)
        qubits = dataio.partition_qubits(cfg)
        for t, path in entries:
            header, records = dataio.read_dataset(path)
            batches = shadows.make_batches(records, n_prime, qubits=qubits)
            rep = shadows.detect_entanglement(batches=batches, reg=reg)
            reports.append({"time": header.time if t is None else t, **_clean(asdict(rep))})
    doc = {"reports": reports}
    text = json.dumps(doc, indent=1)
    if out_json:
        Path(out_json).write_text(text + "\n")
    else:
        click.echo(text)
    for rep in reports:
        val = rep["s2_minus_r2"]
        if rep["valid"] and val is not None:
            flag = "entangled" if val > 0 else "not detected"
            click.echo(f"t={rep['time']}: detection value {val:.6g} ({flag})")
        else:
            click.echo(f"t={rep['time']}: estimate flagged invalid")
    if strict and any(not r["valid"] for r in reports):
        sys.exit(EXIT_INVALID)


@main.command("export-plotdata")
@click.option("--estimates", "est_csv", type=click.Path(exists=True), required=True)
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_csv", type=click.Path(), required=True)
def export_plotdata(est_csv, manifest_path, out_csv):
    """Merge estimator CSV with manifest references into long-format CSV."""
    try:
        doc = dataio.read_manifest(manifest_path)
    except ValidationError as exc:
        _fail_validation(exc)
    lines = Path(est_csv).read_text().strip().split("\n")
    cols = lines[0].split(",")
    refs = {float(e["time"]): e["exact"] for e in doc["times"]}
    out_rows = []
    for line in lines[1:]:
        vals = dict(zip(cols, line.split(",")))
        t = float(vals["t"])
        exact_vals = refs.get(t, {})
        for col in cols[1:]:
            if col.endswith("_err") or col.endswith("_valid"):
                continue
            err = vals.get(col + "_err", "")
            valid = vals.get(col + "_valid", "true")
            ref = None
            if col == "s2_oe":
                ref = exact_vals.get("s2_oe")
            elif col == "purity":
                ref = exact_vals.get("purity")
            elif col == "r2":
                ref = exact_vals.get("r2")
            elif col == "s2_tilde":
                ref = exact_vals.get("s2_unnormalized")
            elif col.startswith("p_q"):
                ref = (exact_vals.get("populations") or {}).get(col[3:])
            elif col.startswith("s2_q"):
                ref = (exact_vals.get("sroe2") or {}).get(col[4:])
            out_rows.append([t, col, vals[col], err, valid,
                             "" if ref is None else ref])
    dataio.write_csv(out_csv, ["t", "series", "value", "error", "valid", "reference"], out_rows)
    click.echo(f"wrote {out_csv} ({len(out_rows)} rows)")


if __name__ == "__main__":
    main()
