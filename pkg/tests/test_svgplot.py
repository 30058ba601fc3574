import xml.etree.ElementTree as ET

import numpy as np

from carleman.svgplot import polyline_svg, write_svg

NS = "{http://www.w3.org/2000/svg}"


def test_well_formed_and_deterministic():
    x = np.linspace(0, 1, 30)
    s = [(x, np.sin(x), "sin"), (x, np.cos(x), "a<b")]
    doc = polyline_svg(s, title="t & u", xlabel="x", ylabel="y")
    assert doc == polyline_svg(s, title="t & u", xlabel="x", ylabel="y")
    root = ET.fromstring(doc)
    lines = root.findall(f"{NS}polyline")
    assert len(lines) == 2
    assert len(lines[0].get("points").split()) == 30
    assert "a<b" in [t.text for t in root.iter(f"{NS}text")]


def test_nonfinite_and_log_points_dropped(tmp_path):
    y = np.array([1.0, np.nan, -1.0, 100.0])
    write_svg(tmp_path / "p.svg", [(np.arange(4), y, "")], logy=True)
    root = ET.parse(tmp_path / "p.svg").getroot()
    assert len(root.find(f"{NS}polyline").get("points").split()) == 2


def test_degenerate_ranges():
    root = ET.fromstring(polyline_svg([([1.0], [2.0], "pt")]))
    assert root.find(f"{NS}polyline") is not None
    assert ET.fromstring(polyline_svg([])).tag == f"{NS}svg"
