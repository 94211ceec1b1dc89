import pytest

from pidistill.data import write_dataset
from pidistill.synthgen import SCMConfig, generate


@pytest.fixture(scope="session")
def dataset_dir(tmp_path_factory):
    """Small prognostic dataset on disk, shared by harness and CLI tests."""
    out = tmp_path_factory.mktemp("scm")
    config = SCMConfig(regime="prognostic", n_samples=60, seed=11,
                       latent_dim=4, d_image=6, d_text=6, image_tokens=3,
                       text_tokens=3, image_noise=0.5, text_noise=0.25,
                       label_noise=0.1)
    dataset, _ = generate(config)
    write_dataset(dataset, out / "manifest.json", out / "embeddings.bin")
    return out
