"""Summary statistics over run manifests."""
from __future__ import annotations

import logging
from typing import Any, Dict, Iterable, List

HEADLINE_METRICS = (
    "terminal_error",
    "relative_error",
    "observability_margin",
    "cg_iterations",
    "outer_iterations",
    "min_sigma",
    "candidates",
    "checks_passed",
    "checks_failed",
)


def calculate_run_stats(manifests: Iterable[Dict[str, Any]]) -> Dict[str, Any]:
    """
    Aggregate statuses and headline metrics over one or more run manifests.

    Args:
        manifests: manifest dictionaries as written by the experiment runner

    Returns:
        Dictionary with run counts per status, operation counts per status and
        the headline metrics of every run
    """
    manifests = list(manifests)
    stats: Dict[str, Any] = {
        "total_runs": len(manifests),
        "statuses": {},
        "operations": {},
        "metrics": [],
        "wall_time": 0.0,
    }
    for manifest in manifests:
        status = manifest.get("status", "unknown")
        stats["statuses"][status] = stats["statuses"].get(status, 0) + 1
        for op_status in manifest.get("operations", {}).values():
            stats["operations"][op_status] = stats["operations"].get(op_status, 0) + 1
        stats["wall_time"] += float(manifest.get("wall_time", 0.0))
        summary = manifest.get("summary", {})
        picked = {key: summary[key] for key in HEADLINE_METRICS if key in summary}
        stats["metrics"].append({"run_id": manifest.get("run_id", ""), **picked})
    return stats


def _format_metrics(metrics: Dict[str, Any]) -> List[str]:
    parts = []
    for key, value in metrics.items():
        if key == "run_id":
            continue
        parts.append(f"{key}={value:.6g}" if isinstance(value, float) else f"{key}={value}")
    return parts


def log_run_stats(stats: Dict[str, Any]) -> None:
    """Log run statistics in a formatted way with emojis."""
    logging.info("📊 " + "=" * 48)
    logging.info("📈 RUN STATISTICS")
    logging.info("📊 " + "=" * 48)
    logging.info("🧪 Runs: %s (%s)", stats["total_runs"],
                 ", ".join(f"{k}: {v}" for k, v in sorted(stats["statuses"].items())) or "none")
    if stats["operations"]:
        logging.info("🔧 Operations: %s",
                     ", ".join(f"{k}: {v}" for k, v in sorted(stats["operations"].items())))
    for metrics in stats["metrics"]:
        parts = _format_metrics(metrics)
        if parts:
            logging.info("📐 %s: %s", metrics.get("run_id", "run"), ", ".join(parts))
    logging.info("⏱️ Wall time: %.2f s", stats["wall_time"])
    logging.info("✅ " + "=" * 48)
