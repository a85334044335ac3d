"""Policy/governance parsing, dataset files and synthetic dataset generation."""

from prozd.ingest.dataset import Dataset, DatasetError, load_dataset, save_dataset
from prozd.ingest.files import export_text, ingest_text
from prozd.ingest.policy import (
    GovernanceRule,
    PolicyParseError,
    ZtPolicy,
    check_compliance,
    format_governance,
    format_policies,
    parse_governance,
    parse_policies,
)
from prozd.ingest.synthetic import STD1, STD2, SyntheticSpec, SyntheticSpecError, generate_synthetic

__all__ = [
    "Dataset",
    "DatasetError",
    "GovernanceRule",
    "PolicyParseError",
    "STD1",
    "STD2",
    "SyntheticSpec",
    "SyntheticSpecError",
    "ZtPolicy",
    "check_compliance",
    "export_text",
    "format_governance",
    "format_policies",
    "generate_synthetic",
    "ingest_text",
    "load_dataset",
    "parse_governance",
    "parse_policies",
    "save_dataset",
]
