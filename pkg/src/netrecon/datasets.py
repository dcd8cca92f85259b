"""Bundled example networks."""

from importlib import resources

from .graph import MeasurementData

# the pair whose double measurement disagrees in the karate example
KARATE_AMBIGUOUS_PAIR = (22, 33)


def karate_club():
    """Zachary's karate club (34 nodes, 78 edges)."""
    from .io import read_graph

    with resources.files(__package__).joinpath("data/karate.txt").open() as fh:
        return read_graph(fh)


def karate_double_measurement():
    """Every pair measured twice: edges seen both times, non-edges never,
    except one edge seen only once."""
    A = karate_club()
    ov = {e: (2, 2) for e in A.edges}
    ov[KARATE_AMBIGUOUS_PAIR] = (2, 1)
    return MeasurementData(A.node_count, default_n=2, overrides=ov)
