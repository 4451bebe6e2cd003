from .mt import MissingnessWeights, fit_mt, fit_oracle_mt, mt_null_threshold, run_mt
from .elastic_net import EnGrid, ElasticNetFit, en_null_threshold, fit_en, fit_oracle_en
from .knn import fit_knn_mt, knn_impute
