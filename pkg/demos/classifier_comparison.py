"""Cross-validate the four classifiers on synthetic CVSS advisories."""
import sys

from scanrecon.classify import Algorithm, TrainerParams, assemble_dataset, cross_validate
from scanrecon.synth import synthetic_advisories

n = int(sys.argv[1]) if len(sys.argv) > 1 else 5000
ds = assemble_dataset(synthetic_advisories(n, seed=0))
print(f"{len(ds)} rows, class counts {ds.class_counts().tolist()}\n")
print(f"{'algorithm':<14} {'acc':>6} {'prec':>6} {'rec':>6} {'f1':>6}   AUC per class")
for algo in Algorithm:
    params = TrainerParams(algo, n_estimators=50) if algo is Algorithm.RANDOM_FOREST else TrainerParams(algo)
    rep = cross_validate(params, ds, seed=0, n_jobs=4)
    aucs = " ".join("  -  " if a is None else f"{a:.3f}" for a in rep.auc_per_class)
    print(f"{algo.value:<14} {rep.accuracy:6.3f} {rep.macro_precision:6.3f} "
          f"{rep.macro_recall:6.3f} {rep.macro_f1:6.3f}   {aucs}")
