"""Command line front end: seeded batch runs that write JSON run directories.

Every command reads a JSON config, runs ``--trials`` independent trials and
writes ``manifest.json``, ``summary.json`` and ``trials/trial_<k>.json`` under
``--out``.  Trial ``k`` draws from ``SeedSequence(seed, spawn_key=(k,))``, so it
can be replayed on its own.

Exit codes: 0 success, 1 a property violation, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path

import numpy as np

from shadowlab import __version__
from shadowlab.cellauto import ca_from_config, check_lipschitz_pair, lipschitz_constant, random_ca
from shadowlab.columnfact import ColumnFactorizationSpec, chain_report, estimate_sft_window
from shadowlab.errors import ContractViolation
from shadowlab.lattice import Exhaustion, SiteSet, dyadic_exhaustion, resolution_index, stability_index
from shadowlab.shadowing import (
    PseudoOrbitTruncation,
    ShadowingInstance,
    counterexample_demo,
    delta_for_epsilon,
    exact_orbit,
    find_shadowing_point,
    perturb_orbit,
    random_seed,
    seed_box,
    validate_pseudo_orbit,
    verify_shadowing,
)
from shadowlab.shiftspace import Alphabet, Pattern, subshift_from_json

COMMANDS = ("shadow-demo", "counterexample", "column-window", "chain", "lipschitz", "validate-po", "gen-po")


class ConfigError(Exception):
    """Malformed configuration; maps to exit status 2."""


class PropertyViolation(Exception):
    """A theorem-contradicting outcome; maps to exit status 1."""


def trial_rng(seed: int, k: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k,)))


def _need(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(f"config is missing field '{key}'")
    return cfg[key]


def _sites(obj, r: int) -> SiteSet:
    """Sites as a list, or ``{"box": [lo, hi]}``, or ``{"cube": side}``."""
    if isinstance(obj, dict):
        if "box" in obj:
            lo, hi = obj["box"]
            return SiteSet.box(tuple(lo), tuple(hi))
        if "cube" in obj:
            return SiteSet.cube(r, int(obj["cube"]))
        raise ConfigError("site set must be a list, {'box': [lo, hi]} or {'cube': side}")
    return SiteSet.from_sites([tuple(s) for s in obj], r)


def _digest(arr: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(arr, dtype=np.int64).tobytes()).hexdigest()[:16]


def _mode(cfg: dict, mode: str | None):
    return mode or cfg.get("mode", "auto")


# ---------------------------------------------------------------------------
# per-command setup and trials


def _window_for(inst: ShadowingInstance, cfg: dict, mode) -> tuple[int, dict]:
    if "N" in cfg:
        n = int(cfg["N"])
        return n, {"N": n, "certified": False, "source": "override"}
    spec = ColumnFactorizationSpec(inst.sig, inst.exhaustion.level(inst.n0), inst.generators)
    est = estimate_sft_window(spec, int(cfg.get("budget", 3)), int(cfg.get("patience", 3)), int(cfg.get("testDepth", 1)), mode)
    if est.N is None:
        raise PropertyViolation("no SFT window found within budget")
    return est.N, dict(est.to_json(), source="estimate")


def _delta(inst: ShadowingInstance, cfg: dict, n: int) -> tuple[Fraction, dict]:
    rep = delta_for_epsilon(inst, n)
    if cfg.get("deltaMode", "bound") == "direct":
        d = Fraction(str(_need(cfg, "delta")))
        return d, dict(rep.to_json(), delta=str(d), boundDelta=str(rep.delta), deltaMode="direct")
    return rep.delta, dict(rep.to_json(), deltaMode="bound")


def _setup_shadow(cfg: dict, mode) -> dict:
    inst = ShadowingInstance.from_json(_need(cfg, "instance"))
    n, window = _window_for(inst, cfg, mode)
    delta, drep = _delta(inst, cfg, n)
    t = int(cfg.get("T", n + 1))
    margin = int(cfg.get("margin", 4))
    return {"inst": inst, "N": n, "delta": delta, "T": t, "margin": margin, "window": window, "deltaReport": drep}


def _make_orbit(ctx: dict, rng, mode, flip_budget):
    inst, t, delta = ctx["inst"], ctx["T"], ctx["delta"]
    m = resolution_index(delta)
    seed = random_seed(inst, seed_box(inst, t, m, int(ctx.get("margin", 4))), rng, mode)
    orbit = exact_orbit(seed, inst, t)
    return perturb_orbit(orbit, inst, delta, rng, flip_budget, mode)


def _trial_shadow(ctx: dict, cfg: dict, k: int, seed: int, mode) -> dict:
    rng = trial_rng(seed, k)
    inst = ctx["inst"]
    pert = _make_orbit(ctx, rng, mode, cfg.get("flipBudget"))
    val = validate_pseudo_orbit(pert.orbit, inst, ctx["delta"])
    out = {"trial": k, "validated": val.ok, "changedSites": pert.changed_sites, "notice": pert.notice}
    if not val.ok:
        out.update(certified=False, verified=False, success=False)
        return out
    cert = find_shadowing_point(pert.orbit, inst, mode)
    if cert is None:
        out.update(certified=False, verified=False, success=False, violation="validated pseudo-orbit without certificate")
        return out
    ok = verify_shadowing(cert.point, pert.orbit, inst)
    out.update(
        certified=True,
        verified=ok,
        success=ok,
        exact=cert.exact,
        n0=cert.n0,
        pointDigest=_digest(cert.point.values),
        searchBoxSize=len(cert.point.domain),
        residuals=[{"alpha": list(a), "distance": d.to_json()} for a, d in sorted(cert.residuals.items())],
        scope=cert.scope,
    )
    if not ok:
        out["violation"] = "certificate failed verification"
    return out


def _trial_gen_po(ctx: dict, cfg: dict, k: int, seed: int, mode) -> dict:
    rng = trial_rng(seed, k)
    pert = _make_orbit(ctx, rng, mode, cfg.get("flipBudget"))
    val = validate_pseudo_orbit(pert.orbit, ctx["inst"], ctx["delta"])
    out = {"trial": k, "validated": val.ok, "success": val.ok, "changedSites": pert.changed_sites, "notice": pert.notice}
    if cfg.get("includeOrbit", True):
        out["orbit"] = pert.orbit.to_json()
    if not val.ok:
        out["violation"] = "perturbed orbit failed validation"
    return out


def _setup_validate(cfg: dict, mode) -> dict:
    inst = ShadowingInstance.from_json(_need(cfg, "instance"))
    po = PseudoOrbitTruncation.from_json(inst.alphabet, _need(cfg, "orbit"))
    delta = cfg.get("delta") or (po.declared_delta and str(po.declared_delta))
    if not delta:
        raise ConfigError("config is missing field 'delta' (and the orbit declares none)")
    return {"inst": inst, "po": po, "delta": Fraction(str(delta))}


def _trial_validate(ctx: dict, cfg: dict, k: int, seed: int, mode) -> dict:
    val = validate_pseudo_orbit(ctx["po"], ctx["inst"], ctx["delta"])
    out = {"trial": k, "delta": str(ctx["delta"]), "validation": val.to_json(), "success": True}
    if cfg.get("solve", False) and val.ok:
        cert = find_shadowing_point(ctx["po"], ctx["inst"], mode)
        out["certified"] = cert is not None
        if cert is not None:
            out["certificate"] = cert.to_json()
            out["verified"] = verify_shadowing(cert.point, ctx["po"], ctx["inst"])
            out["success"] = out["verified"]
    return out


def _trial_counterexample(ctx: dict, cfg: dict, k: int, seed: int, mode) -> dict:
    rep = counterexample_demo(int(_need(cfg, "n")), int(_need(cfg, "m")), int(_need(cfg, "a")), int(cfg.get("b", 1)))
    out = dict(rep.to_json(), trial=k)
    # the example is a theorem: anything else is a bug
    out["success"] = rep.pseudo_orbit_valid and rep.shadowing_points == 0
    if not out["success"]:
        out["violation"] = "counter-example did not behave as proved"
    return out


def _setup_column(cfg: dict, mode) -> dict:
    sig = subshift_from_json(_need(cfg, "subshift"))
    gens = tuple(ca_from_config(sig.alphabet, sig.r, g) for g in _need(cfg, "generators"))
    e = _sites(_need(cfg, "window"), sig.r)
    return {"spec": ColumnFactorizationSpec(sig, e, gens)}


def _trial_column(ctx: dict, cfg: dict, k: int, seed: int, mode) -> dict:
    est = estimate_sft_window(
        ctx["spec"], int(cfg.get("budget", 3)), int(cfg.get("patience", 3)), int(cfg.get("testDepth", 1)), mode
    )
    return dict(est.to_json(), trial=k, success=est.found)


def _setup_chain(cfg: dict, mode) -> dict:
    sig = subshift_from_json(_need(cfg, "subshift"))
    return {"sig": sig, "e": _sites(_need(cfg, "window"), sig.r)}


def _trial_chain(ctx: dict, cfg: dict, k: int, seed: int, mode) -> dict:
    rep = chain_report(ctx["sig"], ctx["e"], int(cfg.get("maxSteps", 32)), int(cfg.get("patience", 3)), mode)
    out = dict(rep.to_json(), trial=k)
    bound = ctx["sig"].alphabet.k * len(ctx["e"])
    mono = all(b <= a for a, b in zip(rep.dims, rep.dims[1:]))
    out["success"] = mono and rep.strict_drops <= bound
    if not out["success"]:
        out["violation"] = "restriction chain increased or dropped too often"
    return out


def _setup_lipschitz(cfg: dict, mode) -> dict:
    r = int(cfg.get("r", 1))
    ex = Exhaustion.from_json(cfg["exhaustion"]) if "exhaustion" in cfg else dyadic_exhaustion(r)
    return {"r": r, "ex": ex}


def _trial_lipschitz(ctx: dict, cfg: dict, k: int, seed: int, mode) -> dict:
    r, ex = ctx["r"], ctx["ex"]
    if "memory" in cfg:
        mem = _sites(cfg["memory"], r)
        si = stability_index(mem, ex)
        return {"trial": k, "memory": mem.to_json(), "n0": si.n0, "C": 2**si.n0, "certified": si.certified, "success": True}
    # random CAs checked on random pattern pairs
    rng = trial_rng(seed, k)
    alph = Alphabet(int(cfg.get("p", 2)), int(cfg.get("k", 1)))
    pairs = int(cfg.get("pairs", 100))
    level = int(cfg.get("level", 6))
    tau = random_ca(alph, r, rng, int(cfg.get("diameter", 8)))
    box = SiteSet.cube(r, 2**level + tau.memory.max_coord())
    counts = {True: 0, False: 0, None: 0}
    for _ in range(pairs):
        x, y = random_pair(alph, box, ex, level, rng)
        counts[check_lipschitz_pair(tau, x, y, ex)] += 1
    out = {
        "trial": k,
        "memory": tau.memory.to_json(),
        "C": lipschitz_constant(tau, ex),
        "pairs": pairs,
        "holds": counts[True],
        "violations": counts[False],
        "undecided": counts[None],
    }
    out["success"] = counts[False] == 0
    if counts[False]:
        out["violation"] = "Lipschitz bound violated"
    return out


def random_pair(alph: Alphabet, box: SiteSet, ex: Exhaustion, level: int, rng) -> tuple[Pattern, Pattern]:
    """Two random patterns that agree on ``E_j`` for a random ``j <= level``."""
    x = Pattern.random(alph, box, rng)
    y = Pattern.random(alph, box, rng)
    cut = int(rng.integers(0, level + 1))
    if cut:
        keep = ex.level(cut)
        y = y.with_values(keep, x.restrict(keep).values)
    return x, y


SETUP = {
    "shadow-demo": _setup_shadow,
    "gen-po": _setup_shadow,
    "validate-po": _setup_validate,
    "counterexample": lambda cfg, mode: {},
    "column-window": _setup_column,
    "chain": _setup_chain,
    "lipschitz": _setup_lipschitz,
}

TRIAL = {
    "shadow-demo": _trial_shadow,
    "gen-po": _trial_gen_po,
    "validate-po": _trial_validate,
    "counterexample": _trial_counterexample,
    "column-window": _trial_column,
    "chain": _trial_chain,
    "lipschitz": _trial_lipschitz,
}

# commands whose result does not depend on the RNG default to one trial
RANDOMISED = {"shadow-demo", "gen-po", "lipschitz"}


def _ctx_summary(ctx: dict) -> dict:
    out = {}
    for key in ("N", "T", "window", "deltaReport"):
        if key in ctx:
            out[key] = ctx[key]
    if "delta" in ctx:
        out["delta"] = str(ctx["delta"])
    return out


def _run_trial(args):
    command, cfg, k, seed, mode = args
    ctx = SETUP[command](cfg, mode)
    return TRIAL[command](ctx, cfg, k, seed, mode)


def run_command(command: str, cfg: dict, seed: int = 0, trials: int | None = None, out: Path | None = None, mode: str | None = None, jobs: int = 1) -> dict:
    """Run ``command`` and return the manifest; writes the run directory when ``out`` is given."""
    if command not in SETUP:
        raise ConfigError(f"unknown command {command!r}")
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    if seed < 0 or seed >= 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if trials is None:
        trials = int(cfg.get("trials", 1))
    if trials < 0:
        raise ConfigError("trials must be >= 0")
    started = datetime.now(timezone.utc).isoformat()
    rmode = _mode(cfg, mode)
    ctx = SETUP[command](cfg, rmode)
    if jobs > 1 and trials > 1:
        with ProcessPoolExecutor(jobs) as pool:
            results = list(pool.map(_run_trial, [(command, cfg, k, seed, rmode) for k in range(trials)]))
    else:
        results = [TRIAL[command](ctx, cfg, k, seed, rmode) for k in range(trials)]
    successes = sum(1 for res in results if res.get("success"))
    violations = [res["trial"] for res in results if "violation" in res]
    summary = {
        "command": command,
        "trials": trials,
        "successes": successes,
        "failures": trials - successes,
        "successFraction": None if trials == 0 else str(Fraction(successes, trials)),
        "violations": violations,
        "setup": _ctx_summary(ctx),
    }
    files = [f"trials/trial_{k}.json" for k in range(trials)]
    manifest = {
        "command": command,
        "config": cfg,
        "seed": seed,
        "trials": trials,
        "mode": rmode,
        "version": __version__,
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "trialFiles": files,
        "summary": summary,
    }
    if out is not None:
        out = Path(out)
        (out / "trials").mkdir(parents=True, exist_ok=True)
        for name, res in zip(files, results):
            (out / name).write_text(json.dumps(res, sort_keys=True, indent=1) + "\n")
        (out / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=1) + "\n")
        (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    manifest["results"] = results
    return manifest


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="shadowlab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON config file ('-' for stdin)")
        sp.add_argument("--seed", type=int, default=0, help="master seed (unsigned 64-bit)")
        sp.add_argument("--trials", type=int, default=None)
        sp.add_argument("--out", type=Path, default=None, help="run directory")
        sp.add_argument("--mode", default=None, help="exact | patience:<j>")
        sp.add_argument("--format", choices=["json"], default="json")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes for trials")
    return ap


def _check_mode(mode: str | None):
    if mode is None or mode == "exact":
        return
    if mode.startswith("patience:"):
        try:
            if int(mode.split(":", 1)[1]) >= 1:
                return
        except ValueError:
            pass
    raise ConfigError(f"--mode must be 'exact' or 'patience:<j>' with j >= 1, got {mode!r}")


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        _check_mode(args.mode)
        text = sys.stdin.read() if str(args.config) == "-" else Path(args.config).read_text()
        try:
            cfg = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        manifest = run_command(args.command, cfg, args.seed, args.trials, args.out, args.mode, args.jobs)
    except (ConfigError, ContractViolation, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (KeyError, TypeError, ValueError) as exc:
        print(f"error: bad config value: {exc}", file=sys.stderr)
        return 2
    except PropertyViolation as exc:
        print(f"property violation: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(manifest["summary"], sort_keys=True))
    if manifest["summary"]["violations"]:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
