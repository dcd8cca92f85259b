import pytest

from netrecon.config import RunConfig, coerce


def test_defaults_are_noninformative():
    c = RunConfig()
    assert (c.alpha, c.beta, c.mu, c.nu) == (1.0, 1.0, 1.0, 1.0)
    assert c.hyper.as_tuple() == (1.0, 1.0, 1.0, 1.0)
    assert c.burn_in == "auto" and c.chains == 1


@pytest.mark.parametrize("kw", [dict(model="bayes"), dict(prior="sbm"), dict(alpha=0), dict(nu=-1.0),
                                dict(chains=0), dict(sweeps=-1), dict(thin=0), dict(burn_in=-5), dict(d=1.0),
                                dict(eps=0), dict(init="random"), dict(init_partition="louvain")])
def test_validation(kw):
    with pytest.raises(ValueError):
        RunConfig(**kw)


def test_from_file_with_overrides(tmp_path):
    p = tmp_path / "run.conf"
    p.write_text("# chain settings\nprior = dcsbm\nsweeps = 50  # short\nburn_in = 10\n"
                 "max_groups = none\nobservables = no\nalpha = 2.5\n")
    c = RunConfig.from_file(p, sweeps="70", seed=None)
    assert c.prior == "dcsbm" and c.sweeps == 70 and c.burn_in == 10
    assert c.max_groups is None and c.observables is False and c.alpha == 2.5


@pytest.mark.parametrize("text,msg", [("sweeps 10\n", "expected 'key = value'"), ("colour = red\n", "unknown key")])
def test_from_file_errors(tmp_path, text, msg):
    p = tmp_path / "bad.conf"
    p.write_text(text)
    with pytest.raises(ValueError, match=msg):
        RunConfig.from_file(p)


def test_coerce_types():
    out = coerce({"burn_in": "auto", "chains": "3", "d": "0.05", "multiplicity_cap": "2", "init": "mixture"})
    assert out == {"burn_in": "auto", "chains": 3, "d": 0.05, "multiplicity_cap": 2, "init": "mixture"}
    assert coerce({"burn_in": "12"})["burn_in"] == 12


def test_to_dict_roundtrip():
    c = RunConfig(prior="er", seed=9)
    assert RunConfig(**c.to_dict()) == c
