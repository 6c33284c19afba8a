import xml.etree.ElementTree as ET

import numpy as np

from crackling_kzm import svgplot

NS = {"s": "http://www.w3.org/2000/svg"}


def test_line_panel_parses_with_shading_and_note():
    x = np.arange(20.0)
    svg = svgplot.line_panel(x, [("R", x**2), ("Q", np.sqrt(x))], "R(t)", "t", "R",
                             shading=[(2, 5, "S"), (5, 9, "W")], marks=[5.0], note="no plateau")
    root = ET.fromstring(svg)
    assert root.tag.endswith("svg")
    assert "no plateau" in svg and "generated" not in svg


def test_line_panel_handles_nan():
    x = np.arange(5.0)
    ET.fromstring(svgplot.line_panel(x, [("a", np.array([1, np.nan, 2, np.nan, 3.0]))], "t", "x", "y"))


def test_timestamp_comment():
    svg = svgplot.line_panel(np.arange(3.0), [("a", np.arange(3.0))], "t", "x", "y", timestamp="2026-01-01T00:00:00")
    assert "<!-- generated 2026-01-01T00:00:00 -->" in svg


def test_loglog_legend():
    x = np.geomspace(1e5, 1e7, 10)
    svg = svgplot.loglog_scatter(x, 3 * x**-0.33, 0.33, 3.0, 0.012, "fit", "rate", "xi")
    ET.fromstring(svg)
    assert "fit b = 0.330 ± 0.012" in svg
    assert svg.count("<circle") == 10


def test_polar_all_positive_ticks_outward():
    th = np.linspace(0, 2 * np.pi, 16, endpoint=False)
    root = ET.fromstring(svgplot.polar_snapshot(np.full(16, 5.0), th, np.ones(16), "p"))
    lines = root.findall(".//s:line", NS)
    assert len(lines) == 16 and all(l.get("class") == "tick-out" for l in lines)
    for l in lines:
        r0 = np.hypot(float(l.get("x1")) - 210, float(l.get("y1")) - 210)
        r1 = np.hypot(float(l.get("x2")) - 210, float(l.get("y2")) - 210)
        assert r1 > r0


def test_polar_mixed_signs():
    th = np.linspace(0, 2 * np.pi, 8, endpoint=False)
    signs = np.array([1, -1] * 4)
    svg = svgplot.polar_snapshot(np.arange(1, 9.0), th, signs, "p")
    assert svg.count('class="tick-in"') == 4 and svg.count('class="tick-out"') == 4


def test_output_deterministic():
    x = np.linspace(0, 1, 50)
    a = svgplot.line_panel(x, [("y", np.sin(x))], "t", "x", "y")
    assert a == svgplot.line_panel(x, [("y", np.sin(x))], "t", "x", "y")
