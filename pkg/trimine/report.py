"""Terminal tables for evaluation, gradient checks, retrieval and mining summaries."""

from rich import box
from rich.table import Table

from .evaluation import EvalReport, RetrievalHit
from .gradcheck import GradcheckRow


class ReportColors:
    """Central place to configure report colors and styles."""

    TITLE = "bold blue"
    HEADER = "bold magenta"
    PASS = "green"
    FAIL = "bold red"
    NUMBER = "white"
    DIM = "bright_black"
    MATCH = "green"
    MISMATCH = "yellow"


def _percent(value: float) -> str:
    return f"{100.0 * value:.2f}"


def eval_table(runs: dict[str, dict[str, EvalReport]]) -> Table:
    """One row per run; for every split, R@k columns followed by Acc.

    Column names carry the split name ("Train R@1", "Test R@1") when more
    than one split is shown.
    """
    splits = list(dict.fromkeys(split for reports in runs.values() for split in reports))
    ranks = sorted({k for reports in runs.values() for report in reports.values() for k in report.recall_at})
    table = Table(title="Retrieval accuracy (%)", title_style=ReportColors.TITLE,
                  header_style=ReportColors.HEADER, box=box.SIMPLE_HEAVY)
    table.add_column("Run")
    for split in splits:
        prefix = f"{split.capitalize()} " if len(splits) > 1 else ""
        for k in ranks:
            table.add_column(f"{prefix}R@{k}", justify="right")
        table.add_column(f"{prefix}Acc.", justify="right")
    table.add_column("Queries", justify="right", style=ReportColors.DIM)
    for name, reports in runs.items():
        cells = []
        for split in splits:
            report = reports.get(split)
            if report is None:
                cells.extend(["-"] * (len(ranks) + 1))
                continue
            cells.extend(_percent(report.recall_at[k]) if k in report.recall_at else "-" for k in ranks)
            cells.append(_percent(report.nn_accuracy))
        queries = "/".join(str(reports[split].query_count) for split in splits if split in reports)
        table.add_row(name, *cells, queries)
    return table


def gradcheck_table(rows: list[GradcheckRow]) -> Table:
    table = Table(title="Gradient check", title_style=ReportColors.TITLE,
                  header_style=ReportColors.HEADER, box=box.SIMPLE_HEAVY)
    table.add_column("Loss")
    table.add_column("W.r.t.")
    table.add_column("Max rel. error", justify="right")
    table.add_column("Status", justify="center")
    for row in rows:
        status = f"[{ReportColors.PASS}]ok[/]" if row.passed else f"[{ReportColors.FAIL}]FAIL[/]"
        table.add_row(row.loss, row.target, f"{row.max_relative_error:.3e}", status)
    return table


def retrieval_table(query_index: int, query_label: int, hits: list[RetrievalHit]) -> Table:
    table = Table(title=f"Top {len(hits)} for query {query_index} (label {query_label})",
                  title_style=ReportColors.TITLE, header_style=ReportColors.HEADER, box=box.SIMPLE_HEAVY)
    table.add_column("Rank", justify="right")
    table.add_column("Index", justify="right")
    table.add_column("Label", justify="right")
    table.add_column("Distance", justify="right")
    for rank, hit in enumerate(hits, start=1):
        color = ReportColors.MATCH if hit.label == query_label else ReportColors.MISMATCH
        table.add_row(str(rank), str(hit.index), f"[{color}]{hit.label}[/]", f"{hit.distance:.6g}")
    return table


def policy_table(counts: dict[str, int], skipped: int) -> Table:
    table = Table(title="Mined triplets", title_style=ReportColors.TITLE,
                  header_style=ReportColors.HEADER, box=box.SIMPLE_HEAVY)
    table.add_column("Policy")
    table.add_column("Triplets", justify="right")
    for policy, count in counts.items():
        table.add_row(policy, str(count))
    table.add_row(f"[{ReportColors.DIM}]skipped anchors[/]", str(skipped))
    return table
