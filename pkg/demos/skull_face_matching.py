"""Two-domain transform matchers, with and without the learned coupling.

Builds a synthetic paired corpus, projects hog descriptors of both
modalities into a shared subspace with per-domain centering, fits the
unsupervised two-transform model and its semi-supervised extension, and
scores held-out skulls against a face gallery.  The coupled model aligns
face codes through the learned map before distances are taken.
"""

import numpy as np

from skullmatch import DomainBatch, FeatureConfig, batch_extract, fit_sstl, fit_ustl, identify, match, sparse_code, synth_paired
from skullmatch.dataset import labeled_pairs, unlabeled_skulls
from skullmatch.pipeline import _transform_params, EvalConfig, fit_domain_projection

records, images = synth_paired(20, 0.05, seed=2)
pairs = labeled_pairs(records)
unlab = unlabeled_skulls(records)

# hold out the last 5 subjects for testing
train, test = pairs[:-5], pairs[-5:]
cfg = FeatureConfig(kind="hog")
F_faces = batch_extract([images[f.sample_id] for f, _ in train], cfg)
F_skulls = batch_extract([images[s.sample_id] for _, s in train], cfg)
F_unlab = batch_extract([images[r.sample_id] for r in unlab], cfg)
G = batch_extract([images[f.sample_id] for f, _ in test], cfg)
P = batch_extract([images[s.sample_id] for _, s in test], cfg)

config = EvalConfig()
proj = fit_domain_projection(F_faces, np.column_stack([F_unlab, F_skulls]),
                             config.tl_dim)
X_f = proj.faces(F_faces)
X_s = proj.skulls(np.column_stack([F_unlab, F_skulls]))
X_s_lab = proj.skulls(F_skulls)
print(f"projected {F_faces.shape[0]}-dim descriptors to {proj.dim} dims")

params = _transform_params(config, proj.dim, X_f, X_s)

ustl = fit_ustl(X_f, X_s, params)
Z_f = sparse_code(ustl.T_f, X_f, params.tau)
rho = config.rho_scale * float(np.trace(Z_f @ Z_f.T)) / proj.dim
sstl = fit_sstl(DomainBatch(X_f, X_s), DomainBatch(X_f, X_s_lab, paired=True),
                params, gamma=config.gamma, rho=rho,
                sup_iters=config.sup_iters)
print(f"coupling fit: joint objective {sstl.joint_trace[0]:.3f} -> "
      f"{sstl.joint_trace[-1]:.3f} over {len(sstl.joint_trace) - 1} cycles")

ids = [f.subject_id for f, _ in test]
for name, model in (("uncoupled", ustl), ("coupled", sstl)):
    scores = match(model, proj.faces(G), proj.skulls(P),
                   gallery_ids=ids, probe_ids=ids)
    rankings = identify(scores)
    hits = sum(r[0] == t for r, t in zip(rankings, ids))
    print(f"{name:9s} rank-1 on {len(ids)} held-out subjects: {hits}/{len(ids)}")
