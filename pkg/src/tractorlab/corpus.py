"""The shipped example corpus, written in the metric file format."""

from __future__ import annotations

from dataclasses import dataclass

from .metricfile import MetricDefinition, parse_metric_file


@dataclass(frozen=True)
class CorpusEntry:
    name: str
    text: str
    signature: tuple
    description: str
    witnesses: tuple = ()          # "curvature", "tractor", "theorem1", "theorem2", ...
    ricci_isotropic: bool | None = None

    def load(self) -> MetricDefinition:
        return parse_metric_file(self.text, name=self.name)

    def summary(self) -> dict:
        return {"name": self.name, "signature": list(self.signature), "description": self.description,
                "witnesses": list(self.witnesses), "ricci_isotropic": self.ricci_isotropic}


_ENTRIES = [
    CorpusEntry(
        "flat22",
        """chart x1 x2 x3 x4 ;
signature 2 2 ;
g 1 1 = -1 ; g 2 2 = -1 ; g 3 3 = 1 ; g 4 4 = 1 ;
""",
        (2, 2), "flat split space R^{2,2}", ("curvature", "tractor", "twistor")),
    CorpusEntry(
        "flat32",
        """chart x1 x2 x3 x4 x5 ;
signature 3 2 ;
g 1 1 = -1 ; g 2 2 = -1 ; g 3 3 = -1 ; g 4 4 = 1 ; g 5 5 = 1 ;
""",
        (3, 2), "flat space R^{3,2}", ("curvature", "tractor", "twistor")),
    CorpusEntry(
        "flat33",
        """chart x1 x2 x3 x4 x5 x6 ;
signature 3 3 ;
g 1 1 = -1 ; g 2 2 = -1 ; g 3 3 = -1 ; g 4 4 = 1 ; g 5 5 = 1 ; g 6 6 = 1 ;
""",
        (3, 3), "flat split space R^{3,3}", ("curvature", "tractor", "twistor")),
    CorpusEntry(
        "sphere3",
        """# round unit 3-sphere in stereographic coordinates
chart x1 x2 x3 ;
signature 0 3 ;
g 1 1 = 4/(1+x1^2+x2^2+x3^2)^2 ;
g 2 2 = 4/(1+x1^2+x2^2+x3^2)^2 ;
g 3 3 = 4/(1+x1^2+x2^2+x3^2)^2 ;
""",
        (0, 3), "round S^3, Einstein with Ric = 2g", ("curvature", "tractor")),
    CorpusEntry(
        "walker_r1",
        """# plane-wave type Walker metric, L = span(d/dx1)
chart x1 u1 u2 y1 ;
walker 1 A(1,1)=1 A(2,2)=1 B(1,1)=u1^2 - 3*u2^2 + y1*u1*u2 ;
""",
        (1, 3), "r = 1 Walker metric with x-independent B", ("theorem1", "scal_vanishing"), True),
    CorpusEntry(
        "walker_r2",
        """chart x1 x2 u1 y1 y2 ;
walker 2 A(1,1)=-1 B(1,1)=u1*y2 + y1^2 B(1,2)=y1*y2 B(2,2)=u1^2 + y2 ;
""",
        (3, 2), "r = 2 Walker metric with x-independent B", ("theorem1", "scal_vanishing"), True),
    CorpusEntry(
        "walker_r3",
        """chart x1 x2 x3 u1 y1 y2 y3 ;
walker 3 A(1,1)=1 B(1,1)=y2^2 + u1^2*y3 B(1,2)=y1*u1 B(2,2)=y3^2 B(2,3)=y1 B(3,3)=u1*y1*y2 ;
""",
        (3, 4), "r = 3 Walker metric with x-independent B", ("theorem1", "scal_vanishing"), True),
    CorpusEntry(
        "walker_r1_generic",
        """chart x1 u1 y1 ;
walker 1 A(1,1)=1 + u1^2*y1 B(1,1)=x1^2 + u1 ;
""",
        (1, 2), "r = 1 Walker metric that is not Ricci-isotropic", ("walker",), False),
    CorpusEntry(
        "pure_m1",
        """pure_walker 1 g(1,1)=z^2*y1 + z^3 ;
spinor 1, -1 ;
""",
        (2, 1), "pure normal form, m = 1", ("theorem1", "theorem2"), True),
    CorpusEntry(
        "pure_m2",
        """pure_walker 2 g(1,1)=x2*y1 + y2^2 g(1,2)=z*y1 g(2,2)=x1*y2 + y1^2 ;
""",
        (3, 2), "pure normal form, m = 2, odd signature", ("theorem1", "theorem2"), True),
    CorpusEntry(
        "pure_m2_split",
        """pure_walker 2 split g(1,1)=x2*y1 + y2^2 g(1,2)=y1 g(2,2)=x1*y2 + y1^2 ;
""",
        (2, 2), "pure normal form, m = 2, split signature", ("theorem1", "theorem2"), True),
    CorpusEntry(
        "pure_m3_split",
        """pure_walker 3 split g(1,1)=x2*y3 + y1^2 g(1,2)=y3 g(1,3)=y1*y2
    g(2,2)=x3*y1 + y2*y3 g(3,3)=x1*y2 + x2*y1 ;
""",
        (3, 3), "pure normal form, m = 3, split signature", ("theorem1", "theorem2"), True),
    CorpusEntry(
        "pure_m3",
        """pure_walker 3 g(1,1)=x2*y3 + y1^2 g(1,2)=z*y3 g(1,3)=y1*y2
    g(2,2)=x3*y1 + y2*y3 g(3,3)=x1*y2 + z^2 ;
""",
        (4, 3), "pure normal form, m = 3, odd signature", ("theorem1", "theorem2"), True),
]


def list_examples() -> list:
    return list(_ENTRIES)


def get_example(name: str) -> CorpusEntry:
    for e in _ENTRIES:
        if e.name == name:
            return e
    raise KeyError(f"no example named {name!r}; available: {', '.join(e.name for e in _ENTRIES)}")


def load_example(name: str) -> MetricDefinition:
    return get_example(name).load()
