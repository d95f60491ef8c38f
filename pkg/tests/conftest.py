import pytest

from teamshock.synth import ShockSpec, SyntheticSpec, generate_synthetic

CORPUS_SEED = 2020


@pytest.fixture(scope="session")
def small_shocked_corpus(tmp_path_factory):
    """Shared small corpus with both shocks injected; used by pipeline and
    CLI tests."""
    out = tmp_path_factory.mktemp("corpus")
    spec = SyntheticSpec(
        n_repos=40,
        shock=ShockSpec(productivity_ate=-0.3, team_size_ate=-0.2))
    paths = generate_synthetic(spec, seed=CORPUS_SEED, out_dir=out)
    return spec, paths
