"""Command-line entry point for batch workflows.

Subcommands: validate, stats, agreement, prompt (asu|acr), generate,
parse (asu|acr), eval, reward, simulate, significance. Option precedence is
flags > config file > defaults; the config file is TOML with one section per
subcommand. Every run that writes files also writes a manifest (inputs,
config hash, versions) next to its first output, and all file writes are
atomic (temp file + rename). Exit codes: 0 success, 1 data error, 2 usage
error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
from pathlib import Path

from . import __version__
from . import corpus, evaluation, gateway, parsing, prompting, reward, rlsim

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib


class DataError(Exception):
    """Anything wrong with the run's inputs; reported on stderr, exit 1."""


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path: Path, record) -> None:
    _atomic_write(path, json.dumps(record, ensure_ascii=False, indent=2) + "\n")


def _write_jsonl(path: Path, records) -> None:
    _atomic_write(path, "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records))


def _read_jsonl(path: Path) -> list[dict]:
    try:
        with path.open("r", encoding="utf-8") as f:
            return [json.loads(line) for line in f if line.strip()]
    except FileNotFoundError:
        raise DataError(f"no such file: {path}")
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: invalid JSON on line {e.lineno}")


def _load_dialogues(path: str, check: bool = True) -> list[corpus.Dialogue]:
    try:
        return corpus.load_dataset(path, check=check)
    except FileNotFoundError:
        raise DataError(f"no such file: {path}")
    except (corpus.DatasetFormatError, corpus.DatasetValidationError) as e:
        raise DataError(f"{path}: {e}")


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with Path(path).open("rb") as f:
            return tomllib.load(f)
    except FileNotFoundError:
        raise DataError(f"no such config file: {path}")
    except tomllib.TOMLDecodeError as e:
        raise DataError(f"{path}: invalid TOML: {e}")


def _merge(args: argparse.Namespace, config: dict, section: str, keys: list[str]) -> None:
    """Fill unset flags from the config file's subcommand section."""
    table = config.get(section, {})
    for key in keys:
        if getattr(args, key, None) is None and key in table:
            setattr(args, key, table[key])


def _manifest(args: argparse.Namespace, inputs: dict, outputs: list[Path],
              effective: dict) -> None:
    if not outputs:
        return
    blob = json.dumps(effective, sort_keys=True, default=str).encode()
    record = {
        "subcommand": args.command,
        "argv": sys.argv[1:],
        "inputs": inputs,
        "outputs": [str(p) for p in outputs],
        "config_hash": hashlib.sha256(blob).hexdigest(),
        "seed": args.seed,
        "versions": {"diaquad": __version__,
                     "python": ".".join(map(str, sys.version_info[:3]))},
    }
    first = outputs[0]
    _write_json(first.with_name(first.name + ".manifest.json"), record)


def _reward_config(config: dict) -> reward.RewardConfig:
    section = config.get("reward", {})
    return reward.RewardConfig(
        alpha=section.get("alpha", 15.0), beta=section.get("beta", 5.0),
        gamma=section.get("gamma", 3.0), epsilon=section.get("epsilon", 1e-6))


# -- subcommands --


def _cmd_validate(args, config) -> int:
    if args.guidelines:
        print(corpus.ANNOTATION_GUIDELINES)
        return 0
    try:
        dialogues = corpus.read_dialogues(args.data)
    except corpus.DatasetFormatError as e:
        raise DataError(f"{args.data}: {e}")
    except FileNotFoundError:
        raise DataError(f"no such file: {args.data}")
    violations: list[corpus.Violation] = []
    seen: set[str] = set()
    for d in dialogues:
        if d.dialogue_id in seen:
            violations.append(corpus.Violation(d.dialogue_id, "duplicate-id",
                                               "dialogue_id occurs more than once"))
        seen.add(d.dialogue_id)
        violations.extend(corpus.validate(d))
    for v in violations:
        print(v)
    print(f"{len(dialogues)} dialogue(s), {len(violations)} violation(s)")
    return 1 if violations else 0


def _cmd_stats(args, config) -> int:
    dialogues = _load_dialogues(args.data)
    s = corpus.stats(dialogues)
    print(corpus.format_stats(s))
    outputs = []
    if args.json:
        path = Path(args.json)
        _write_json(path, corpus.stats_to_record(s))
        outputs.append(path)
    _manifest(args, {"data": args.data}, outputs, {"data": args.data})
    return 0


def _cmd_agreement(args, config) -> int:
    a = _load_dialogues(args.a)
    b = _load_dialogues(args.b)
    try:
        f1, acc = corpus.agreement(a, b)
    except ValueError as e:
        raise DataError(str(e))
    print(f"F1: {f1:.2f}")
    print(f"Accuracy: {acc:.2f}")
    outputs = []
    if args.json:
        path = Path(args.json)
        _write_json(path, {"f1": f1, "accuracy": acc})
        outputs.append(path)
    _manifest(args, {"a": args.a, "b": args.b}, outputs, {"a": args.a, "b": args.b})
    return 0


def _cmd_prompt(args, config) -> int:
    _merge(args, config, "prompt", ["template", "language"])
    dialogues = _load_dialogues(args.data)
    task = args.task.upper()
    if args.template:
        template = prompting.load_template(args.template)
        if template.task != task:
            raise DataError(f"template task {template.task} does not match {task}")
    else:
        template = prompting.default_template(task, args.language or "en")
    records = []
    try:
        for d in dialogues:
            if task == "ASU":
                records.append({"prompt_id": d.dialogue_id, "task": "asu",
                                "prompt": prompting.build_asu_input(d, template)})
            else:
                for chain in d.aspect_chains:
                    records.append({
                        "prompt_id": f"{d.dialogue_id}#{chain.explicit}",
                        "task": "acr",
                        "prompt": prompting.build_acr_input(d, chain.explicit, template)})
    except prompting.TemplateError as e:
        raise DataError(str(e))
    if args.out:
        path = Path(args.out)
        _write_jsonl(path, records)
        print(f"wrote {len(records)} prompt(s) to {path}")
        _manifest(args, {"data": args.data, "template": args.template}, [path],
                  {"task": task, "template": args.template})
    else:
        for r in records:
            print(json.dumps(r, ensure_ascii=False))
    return 0


def _cmd_generate(args, config) -> int:
    _merge(args, config, "generate", ["backend", "mock", "data", "n_outputs", "n_scores"])
    prompts = _read_jsonl(Path(args.prompts))
    results = []
    if args.mock:
        dialogues = _load_dialogues(args.data) if args.data else []
        profile = gateway.MockProfile(behavior=args.mock, dialogues=tuple(dialogues),
                                      n_outputs=args.n_outputs or 4,
                                      n_scores=args.n_scores or 4)
        try:
            for rec in prompts:
                results.append((rec["prompt_id"],
                                gateway.mock_generate(rec["prompt"], profile,
                                                      seed=args.seed)))
        except ValueError as e:
            raise DataError(str(e))
    elif args.backend:
        backend_conf = _load_config(args.backend).get("backend", {})
        cfg = gateway.BackendConfig(
            endpoint=backend_conf.get("endpoint", ""),
            model=backend_conf.get("model", "default"),
            auth=backend_conf.get("auth"),
            n_candidates=backend_conf.get("n_candidates", 4),
            timeout=backend_conf.get("timeout", 30.0),
            max_retries=backend_conf.get("max_retries", 3),
            max_concurrency=args.jobs or backend_conf.get("max_concurrency", 4))
        if not cfg.endpoint:
            raise DataError("backend config needs an 'endpoint'")
        try:
            generations = gateway.generate_many([r["prompt"] for r in prompts], cfg)
        except gateway.GatewayError as e:
            raise DataError(str(e))
        results = list(zip((r["prompt_id"] for r in prompts), generations))
    else:
        raise DataError("choose --mock BEHAVIOR or --backend CONFIG")
    records = [{"prompt_id": pid, "outputs": list(g.outputs),
                "scores": [list(s) for s in g.scores], "meta": g.meta}
               for pid, g in results]
    path = Path(args.out or "generations.jsonl")
    _write_jsonl(path, records)
    print(f"wrote {len(records)} generation record(s) to {path}")
    _manifest(args, {"prompts": args.prompts, "data": args.data}, [path],
              {"mock": args.mock, "backend": args.backend})
    return 0


def _result_from_record(rec: dict) -> reward.GenerationResult:
    return reward.GenerationResult(outputs=tuple(rec["outputs"]),
                                   scores=tuple(tuple(s) for s in rec["scores"]),
                                   meta=rec.get("meta", {}))


def _cmd_parse(args, config) -> int:
    records = _read_jsonl(Path(args.generations))
    outputs: list[Path] = []
    if args.task == "asu":
        predictions: dict[str, list[parsing.QuadFragment]] = {}
        for rec in records:
            parsed = parsing.parse_asu_output(rec["outputs"][0])
            predictions.setdefault(rec["prompt_id"], []).extend(parsed.quadruples)
        lines = [{"dialogue_id": did,
                  "quadruples": [parsing.fragment_to_record(q) for q in quads]}
                 for did, quads in predictions.items()]
        path = Path(args.out or "predictions_asu.jsonl")
        _write_jsonl(path, lines)
        print(f"wrote quadruples for {len(lines)} dialogue(s) to {path}")
        outputs.append(path)
    else:
        if not args.data:
            raise DataError("parse acr needs --data for utterance counts")
        dialogues = {d.dialogue_id: d for d in _load_dialogues(args.data)}
        lines = []
        failures = 0
        for rec in records:
            pid = rec["prompt_id"]
            did, _, explicit = pid.partition("#")
            if did not in dialogues:
                raise DataError(f"prompt_id {pid!r} names unknown dialogue {did!r}")
            n = len(dialogues[did].utterances)
            try:
                parsed = parsing.parse_acr_output(rec["outputs"][0], n)
            except parsing.AcrParseError as e:
                failures += 1
                print(f"skipping {pid}: {e}", file=sys.stderr)
                continue
            lines.append({"dialogue_id": did, "explicit": explicit,
                          "labels": list(parsed.labels)})
        path = Path(args.out or "predictions_acr.jsonl")
        _write_jsonl(path, lines)
        print(f"wrote {len(lines)} chain prediction(s) to {path} "
              f"({failures} unparseable)")
        outputs.append(path)
    _manifest(args, {"generations": args.generations, "data": args.data}, outputs,
              {"task": args.task})
    return 0


def _cmd_eval(args, config) -> int:
    _merge(args, config, "eval", ["gold", "pred", "acr_pred"])
    if not args.gold or not args.pred:
        raise DataError("eval needs --gold and --pred")
    gold = _load_dialogues(args.gold)
    try:
        pred = parsing.load_asu_predictions(args.pred)
    except FileNotFoundError:
        raise DataError(f"no such file: {args.pred}")
    except (json.JSONDecodeError, KeyError) as e:
        raise DataError(f"{args.pred}: malformed predictions file: {e}")
    try:
        report = evaluation.evaluate(gold, pred)
    except ValueError as e:
        raise DataError(str(e))
    print(evaluation.format_report(report))
    record = evaluation.report_to_record(report)
    if args.acr_pred:
        try:
            acr_pred = parsing.load_acr_predictions(args.acr_pred)
            acr_score = evaluation.evaluate_acr(gold, acr_pred)
        except FileNotFoundError:
            raise DataError(f"no such file: {args.acr_pred}")
        except KeyError as e:
            raise DataError(f"{args.acr_pred}: malformed predictions file: {e}")
        except ValueError as e:
            raise DataError(str(e))
        print(f"ACR F1: {acr_score.f1 * 100:.2f}")
        record["acr"] = evaluation.score_to_record(acr_score)
    outputs = []
    if args.json:
        path = Path(args.json)
        _write_json(path, record)
        outputs.append(path)
    _manifest(args, {"gold": args.gold, "pred": args.pred}, outputs,
              {"gold": args.gold, "pred": args.pred, "acr_pred": args.acr_pred})
    return 0


def _cmd_reward(args, config) -> int:
    _merge(args, config, "reward", ["gold", "asu", "acr"])
    if not args.gold or not args.asu:
        raise DataError("reward needs --gold and --asu (and usually --acr)")
    gold = {d.dialogue_id: d for d in _load_dialogues(args.gold)}
    asu_gens = {rec["prompt_id"]: _result_from_record(rec)
                for rec in _read_jsonl(Path(args.asu))}
    acr_gens: dict[str, dict[str, reward.GenerationResult]] = {}
    if args.acr:
        for rec in _read_jsonl(Path(args.acr)):
            did, _, explicit = rec["prompt_id"].partition("#")
            acr_gens.setdefault(did, {})[explicit] = _result_from_record(rec)
    cfg = _reward_config(config)
    records = []
    for did, asu_gen in asu_gens.items():
        if did not in gold:
            raise DataError(f"generations for unknown dialogue {did!r}")
        breakdown = reward.episode_reward(asu_gen, acr_gens.get(did), gold[did], cfg)
        records.append(reward.breakdown_to_record(breakdown, dialogue_id=did))
    path = Path(args.out or "rewards.jsonl")
    _write_jsonl(path, records)
    mean_total = sum(r["total"] for r in records) / len(records) if records else 0.0
    print(f"wrote {len(records)} episode reward(s) to {path} "
          f"(mean total {mean_total:.4f})")
    _manifest(args, {"gold": args.gold, "asu": args.asu, "acr": args.acr}, [path],
              {"reward": config.get("reward", {})})
    return 0


def _cmd_simulate(args, config) -> int:
    scenario_path = args.scenario or args.config
    if scenario_path:
        try:
            scenario = rlsim.load_scenario(scenario_path)
        except FileNotFoundError:
            raise DataError(f"no such file: {scenario_path}")
        except ValueError as e:
            raise DataError(str(e))
    else:
        scenario = rlsim.default_scenario()
    # precedence: --seed flag, then the scenario file, then 42
    seed = args.seed if args.seed is not None else (
        scenario.seed if scenario.seed is not None else 42)
    try:
        result = rlsim.simulate(scenario, seed=seed)
    except ValueError as e:
        raise DataError(str(e))
    last = result.curve[-1]
    final_p = float(result.final_policy.probs()[scenario.gold_index])
    print(f"{len(result.curve)} steps, final expected_reward {last.expected_reward:.4f}, "
          f"p_correct {final_p:.4f}, repetition_rate {last.repetition_rate:.4f}")
    outputs = []
    if args.out:
        path = Path(args.out)
        _atomic_write(path, rlsim.curve_to_csv(result.curve))
        print(f"wrote learning curve to {path}")
        outputs.append(path)
    _manifest(args, {"scenario": args.scenario}, outputs,
              {"scenario": args.scenario, "seed": seed})
    return 0


def _per_dialogue_scores(path: Path) -> list[float] | dict[str, float]:
    try:
        with path.open("r", encoding="utf-8") as f:
            payload = json.load(f)
    except FileNotFoundError:
        raise DataError(f"no such file: {path}")
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: invalid JSON: {e}")
    if isinstance(payload, list):
        return [float(v) for v in payload]
    if isinstance(payload, dict) and "per_dialogue_quadruple_f1" in payload:
        return {k: float(v) for k, v in payload["per_dialogue_quadruple_f1"].items()}
    raise DataError(f"{path}: expected a JSON array of scores or an eval report")


def _cmd_significance(args, config) -> int:
    a = _per_dialogue_scores(Path(args.a))
    b = _per_dialogue_scores(Path(args.b))
    if isinstance(a, dict) and isinstance(b, dict):
        ids = sorted(set(a) & set(b))
        if len(ids) < len(a) or len(ids) < len(b):
            print(f"pairing on {len(ids)} shared dialogue id(s)", file=sys.stderr)
        a = [a[i] for i in ids]
        b = [b[i] for i in ids]
    elif isinstance(a, dict) or isinstance(b, dict):
        raise DataError("cannot pair a report file with a bare score array")
    try:
        res = evaluation.significance(a, b)
    except ValueError as e:
        raise DataError(str(e))
    if res.degenerate:
        print(f"degenerate: zero variance of differences over {res.n} pairs"
              + (f" (t={res.t})" if res.t is not None else ""))
    else:
        print(f"t = {res.t:.6g}, p = {res.p:.6g} (n = {res.n})")
    outputs = []
    if args.json:
        path = Path(args.json)
        _write_json(path, {"t": res.t, "p": res.p, "degenerate": res.degenerate,
                           "n": res.n})
        outputs.append(path)
    _manifest(args, {"a": args.a, "b": args.b}, outputs, {"a": args.a, "b": args.b})
    return 0


# -- wiring --


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diaquad",
        description="Dialogue aspect-sentiment quadruple toolkit")
    parser.add_argument("--seed", type=int, default=None, help="global RNG seed")
    parser.add_argument("--jobs", type=int, default=None, help="parallelism cap")
    parser.add_argument("--json", default=None, help="write a JSON report here")
    parser.add_argument("--out", default=None, help="write the primary output here")
    parser.add_argument("--config", default=None, help="TOML config file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="lint a dataset file")
    p.add_argument("data", nargs="?", help="dataset JSONL")
    p.add_argument("--guidelines", action="store_true",
                   help="print the judgment-based annotation guidelines")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("stats", help="corpus statistics table")
    p.add_argument("data", help="dataset JSONL")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("agreement", help="annotator agreement F1/accuracy")
    p.add_argument("a", help="first annotator's dataset JSONL")
    p.add_argument("b", help="second annotator's dataset JSONL")
    p.set_defaults(func=_cmd_agreement)

    p = sub.add_parser("prompt", help="build task prompts")
    p.add_argument("task", choices=["asu", "acr"])
    p.add_argument("data", help="dataset JSONL")
    p.add_argument("--template", default=None, help="template TOML file")
    p.add_argument("--language", default=None, choices=["en", "zh"])
    p.set_defaults(func=_cmd_prompt)

    p = sub.add_parser("generate", help="run prompts through a backend or the mock")
    p.add_argument("--prompts", required=True, help="prompts JSONL from 'prompt'")
    p.add_argument("--backend", default=None, help="backend TOML config")
    p.add_argument("--mock", default=None, choices=list(gateway.BEHAVIORS),
                   help="use the offline mock with this behavior")
    p.add_argument("--data", default=None, help="gold dataset for the mock")
    p.add_argument("--n-outputs", dest="n_outputs", type=int, default=None)
    p.add_argument("--n-scores", dest="n_scores", type=int, default=None)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("parse", help="parse generations into predictions")
    p.add_argument("task", choices=["asu", "acr"])
    p.add_argument("--generations", required=True, help="generations log JSONL")
    p.add_argument("--data", default=None, help="dataset JSONL (required for acr)")
    p.set_defaults(func=_cmd_parse)

    p = sub.add_parser("eval", help="score predictions against gold")
    p.add_argument("--gold", default=None, help="gold dataset JSONL")
    p.add_argument("--pred", default=None, help="quadruple predictions JSONL")
    p.add_argument("--acr-pred", dest="acr_pred", default=None,
                   help="chain predictions JSONL")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("reward", help="episode rewards from generation logs")
    p.add_argument("--gold", default=None, help="gold dataset JSONL")
    p.add_argument("--asu", default=None, help="extraction generations log")
    p.add_argument("--acr", default=None, help="chain generations log")
    p.set_defaults(func=_cmd_reward)

    p = sub.add_parser("simulate", help="run the toy policy-gradient simulation")
    p.add_argument("--scenario", default=None, help="scenario TOML file")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("significance", help="paired t-test over per-dialogue scores")
    p.add_argument("a", help="eval report JSON or JSON score array")
    p.add_argument("b", help="eval report JSON or JSON score array")
    p.set_defaults(func=_cmd_significance)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "validate" and not args.guidelines and not args.data:
        parser.error("validate needs a dataset file (or --guidelines)")
    try:
        config = _load_config(args.config)
        return args.func(args, config)
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
