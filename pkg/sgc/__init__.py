# -*- coding: utf-8 -*-
"""
Sparse Gradient Compression

Core Objects: SgcConfig, the optimizers (SGD, AdamW, SGC, MESGC, CESGC),
OMP recovery, and the memory model.

"""
import datetime

from sgc.errors import SgcError
from sgc.memory import LayerShape, MethodSpec, account
from sgc.model import TrainingModel, train
from sgc.omp import joint_recover, omp_cholesky, omp_naive
from sgc.optimizer import CESGC, MESGC, SGC, SGD, AdamW, SgcConfig, make_optimizer


__all__ = [
    "SgcConfig",
    "SGD",
    "AdamW",
    "SGC",
    "MESGC",
    "CESGC",
    "make_optimizer",
    "omp_naive",
    "omp_cholesky",
    "joint_recover",
    "LayerShape",
    "MethodSpec",
    "account",
    "TrainingModel",
    "train",
    "SgcError",
]

__title__ = "sgc"
__version__ = "0.1.0"
__license__ = "Apache 2.0"
__copyright__ = "Copyright %s SGC Developers" % datetime.date.today().year
