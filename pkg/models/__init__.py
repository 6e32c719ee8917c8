"""Data models for the cross-site homogeneity test."""

from .site_data import SiteDataset, FoldPlan, InputSchema, SampleFlow
from .learner import LassoModel
from .nuisance import OWN, COMPLEMENT, ARMS, NuisanceFit, Augmentation
from .settings import LearnerSettings, TestConfig, DgpConfig
from .results import ScoreSample, TestResult, SimReport

__all__ = [
    'SiteDataset',
    'FoldPlan',
    'InputSchema',
    'SampleFlow',
    'LassoModel',
    'OWN',
    'COMPLEMENT',
    'ARMS',
    'NuisanceFit',
    'Augmentation',
    'LearnerSettings',
    'TestConfig',
    'DgpConfig',
    'ScoreSample',
    'TestResult',
    'SimReport',
]
