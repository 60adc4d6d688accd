"""
HTML reporting module using Plotly and Jinja2.
"""
import os
from datetime import datetime

import plotly.graph_objects as go
import plotly.io as pio
from jinja2 import Environment, FileSystemLoader

# Set default plotly template
pio.templates.default = "plotly_white"


def _create_strata_plot(run) -> str:
    """Grouped bar chart of mean DSC per stratum, one trace per method."""
    frame = run.report.to_frame()
    fig = go.Figure()
    strata = [c for c in frame.columns if c != "n"]
    for method, row in frame.iterrows():
        values = [None if row[c] != row[c] else float(row[c]) for c in strata]
        fig.add_trace(go.Bar(
            x=strata,
            y=values,
            name=str(method),
            hovertemplate="<b>%{x}</b><br>DSC: %{y:.3f}<extra></extra>"
        ))

    fig.update_layout(
        title="Mean DSC by stratum",
        barmode="group",
        xaxis_title="Stratum",
        yaxis_title="DSC",
        yaxis=dict(range=[0, 1]),
        legend=dict(orientation="h", yanchor="bottom", y=1.02, xanchor="right", x=1),
        margin=dict(l=50, r=50, t=100, b=50),
        plot_bgcolor="white"
    )
    return pio.to_html(fig, full_html=False, include_plotlyjs=False, post_script=None)


def _create_case_plot(run) -> str:
    """Per-case DSC against nodule diameter, coloured by method."""
    fig = go.Figure()
    for method in run.methods:
        scores = run.scores(method)
        if not scores:
            continue
        fig.add_trace(go.Scatter(
            x=[s.diameter_mm for s in scores],
            y=[s.dsc for s in scores],
            mode="markers",
            name=method,
            text=[f"{s.case_id} ({s.nodule_type.value})" for s in scores],
            marker=dict(size=8, line=dict(width=1, color="DarkSlateGrey")),
            hovertemplate="<b>%{text}</b><br>Diameter: %{x:.1f} mm<br>DSC: %{y:.3f}<extra></extra>"
        ))

    fig.update_layout(
        title="Per-nodule DSC",
        xaxis_title="Diameter (mm)",
        yaxis_title="DSC",
        yaxis=dict(range=[0, 1.05]),
        legend=dict(orientation="h", yanchor="bottom", y=1.02, xanchor="right", x=1),
        margin=dict(l=50, r=50, t=100, b=50),
        hovermode="closest",
        plot_bgcolor="white"
    )
    return pio.to_html(fig, full_html=False, include_plotlyjs=False, post_script=None)


def generate_html_report(run, filepath: str):
    """
    Renders a SegmentationRun into a standalone HTML report.
    """
    template_dir = os.path.join(os.path.dirname(__file__), "templates")
    env = Environment(loader=FileSystemLoader(template_dir), autoescape=True)
    template = env.get_template("segmentation_report.html")

    alerts = run.alerts.to_dict("records") if not run.alerts.empty else []

    if run.methods:
        report = run.report
        report_table_html = report.to_frame().round(3).to_html(classes="table", border=0, na_rep="n/a")
        strata_plot_html = _create_strata_plot(run)
        case_plot_html = _create_case_plot(run)
    else:
        report_table_html = "<p><i>Run not yet processed. Run .process() to see results.</i></p>"
        strata_plot_html = case_plot_html = None

    context = {
        "date": datetime.now().strftime("%Y-%m-%d %H:%M"),
        "manifest_path": str(run.manifest_path),
        "n_cases": len(run.cases),
        "methods": run.methods,
        "config": run.config.to_dict(),
        "alerts": alerts,
        "report_table_html": report_table_html,
        "strata_plot_html": strata_plot_html,
        "case_plot_html": case_plot_html,
    }

    html_content = template.render(context)

    try:
        with open(filepath, "w", encoding="utf-8") as f:
            f.write(html_content)
    except OSError as e:
        raise IOError(f"Failed to write file {filepath}: {e}") from e
