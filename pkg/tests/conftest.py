import pytest

from ambigseq.campaign import dataset_filename, mine_datasets
from ambigseq.config import CampaignConfig


@pytest.fixture(scope="session")
def mined_l3(tmp_path_factory):
    """One shared length-3 mining pass; tests copy the dataset file as needed."""
    out = tmp_path_factory.mktemp("mined")
    config = CampaignConfig(lengths=(3,), output_dir=str(out))
    mine_datasets(config)
    return out / dataset_filename(3)
