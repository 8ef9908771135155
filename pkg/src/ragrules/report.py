"""Machine-readable run reports and their human rendering.

Reports are JSON with sorted keys so that identical runs produce identical
bytes apart from the generated_at stamp. Source texts are referenced by
index, label, and content hash rather than inlined.
"""

from __future__ import annotations

import hashlib
import json
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .lattice import InputSet, Interpretation, mask_to_indices, minimal_rules
from .miner_dual import DualMineResult
from .miner_mono import MineResult
from .oracle import OracleResult

SCHEMA_VERSION = 1


def config_digest(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _source_entries(input_set: InputSet) -> list[dict]:
    return [
        {
            "index": i + 1,
            "label": input_set.labels[i],
            "sha256": hashlib.sha256(text.encode("utf-8")).hexdigest(),
            "chars": len(text),
        }
        for i, text in enumerate(input_set.sources)
    ]


def _mask_entries(masks) -> list[dict]:
    return [{"mask": m, "indices": mask_to_indices(m)} for m in sorted(masks)]


def _base(mode: str, digest: str) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "tool": {"name": "ragrules", "version": __version__},
        "mode": mode,
        "config_digest": digest,
        "generated_at": datetime.now(timezone.utc).isoformat(),
    }


def build_mono_report(input_set: InputSet, interpretation: Interpretation,
                      result: MineResult, predicate_description: str,
                      digest: str) -> dict:
    report = _base("mine-mono", digest)
    report.update({
        "interpretation": interpretation.value,
        "n": input_set.width,
        "sources": _source_entries(input_set),
        "predicate": {"description": predicate_description},
        "valid": _mask_entries(result.valid),
        "minimal": _mask_entries(result.minimal),
        "telemetry": result.telemetry.as_dict(),
    })
    return report


def build_dual_report(input_set: InputSet, result: DualMineResult,
                      retention_description: str, omission_description: str,
                      digest: str) -> dict:
    report = _base("mine-dual", digest)
    report.update({
        "n": input_set.width,
        "sources": _source_entries(input_set),
        "predicates": {
            "retention": {"description": retention_description},
            "omission": {"description": omission_description},
        },
        "valid_retention": _mask_entries(result.valid_ret),
        "valid_omission": _mask_entries(result.valid_omi),
        "minimal_retention": _mask_entries(result.minimal_ret),
        "minimal_omission": _mask_entries(result.minimal_omi),
        "telemetry": result.telemetry.as_dict(),
    })
    return report


def build_verify_report(input_set: InputSet, interpretation: Interpretation,
                        mask: int, valid: bool, predicate_description: str,
                        digest: str) -> dict:
    report = _base("verify", digest)
    report.update({
        "interpretation": interpretation.value,
        "n": input_set.width,
        "sources": _source_entries(input_set),
        "predicate": {"description": predicate_description},
        "rule": {"mask": mask, "indices": mask_to_indices(mask)},
        "valid": valid,
        "checks": 1 << (input_set.width - mask.bit_count()),
    })
    return report


def build_oracle_report(input_set: InputSet, interpretation: Interpretation,
                        result: OracleResult, predicate_description: str,
                        digest: str) -> dict:
    report = _base("oracle", digest)
    report.update({
        "interpretation": interpretation.value,
        "n": input_set.width,
        "sources": _source_entries(input_set),
        "predicate": {"description": predicate_description},
        "valid": _mask_entries(result.valid),
        "minimal": _mask_entries(minimal_rules(result.valid)),
        "evaluations": result.evaluations,
        "per_node_satisfaction": result.satisfaction_dump(),
        "telemetry": {"model_calls": result.evaluations},
    })
    return report


def write_report(report: dict, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def load_report(path: str | Path) -> dict:
    report = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(report, dict) or "schema_version" not in report:
        raise ValueError(f"{path} is not a run report")
    if report["schema_version"] > SCHEMA_VERSION:
        raise ValueError(f"report schema {report['schema_version']} is newer than this tool")
    return report


def _names(indices: list[int], sources: list[dict]) -> str:
    labels = {entry["index"]: entry["label"] for entry in sources}
    picked = [labels.get(i, f"s{i}") for i in indices]
    if len(picked) == 1:
        return picked[0]
    return ", ".join(picked[:-1]) + " and " + picked[-1]


def _rule_sentence(entry: dict, interpretation: str, sources: list[dict],
                   description: str) -> str:
    indices = entry["indices"]
    if not indices:
        return "The predicate holds for every subset of sources."
    names = _names(indices, sources)
    verb = "is" if len(indices) == 1 else "are"
    action = "retained" if interpretation == "retention" else "omitted"
    return f"If {names} {verb} {action}, then {description}."


def _explain_rules(minimal: list[dict], interpretation: str, sources: list[dict],
                   description: str) -> list[str]:
    if not minimal:
        return ["No valid rules exist for this predicate."]
    return [_rule_sentence(entry, interpretation, sources, description)
            for entry in minimal]


def explain_report(report: dict) -> str:
    """Render a report's minimal rules as if-then sentences."""
    mode = report.get("mode")
    if mode == "mine-mono" or mode == "oracle":
        lines = _explain_rules(report["minimal"], report["interpretation"],
                               report["sources"], report["predicate"]["description"])
    elif mode == "mine-dual":
        lines = ["Retention rules:"]
        lines += ["  " + s for s in _explain_rules(
            report["minimal_retention"], "retention", report["sources"],
            report["predicates"]["retention"]["description"])]
        lines.append("Omission rules:")
        lines += ["  " + s for s in _explain_rules(
            report["minimal_omission"], "omission", report["sources"],
            report["predicates"]["omission"]["description"])]
    elif mode == "verify":
        entry = report["rule"]
        verdict = "valid" if report["valid"] else "invalid"
        if report["valid"]:
            lines = [f"The rule is {verdict}.",
                     _rule_sentence(entry, report["interpretation"], report["sources"],
                                    report["predicate"]["description"])]
        else:
            lines = [f"The rule is {verdict}."]
    else:
        raise ValueError(f"cannot explain report mode {mode!r}")
    return "\n".join(lines)
