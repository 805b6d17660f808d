"""FMANet: the fusion and attention blocks, then the SCNN shape trace."""
import numpy as np

from fmanet.model import REFERENCE_TRACE, FMANet, FmanetHyper, ffb_consensus, smab_cues

rng = np.random.default_rng(0)
m_on = rng.uniform(0, 1, (1, 2, 16, 16))
m_off = m_on + 0.1 * rng.standard_normal(m_on.shape)
c = ffb_consensus(m_on, m_off)
print("consensus range [%.3f, %.3f]" % (c.min(), c.max()))
joint, coherence = smab_cues(m_on[:, 0] ** 2, m_off[:, 0] ** 2, tau=FmanetHyper().tau)
print("SMAB cues", joint.shape, "coherence mean %.3f" % coherence.mean())

model = FMANet(num_classes=5, input_size=16, hyper=FmanetHyper(c_mid=4), hidden=16, seed=0)
inputs = {"i_on": rng.standard_normal((2, 3, 16, 16)).astype(np.float32),
          "i_off": rng.standard_normal((2, 3, 16, 16)).astype(np.float32),
          "m_on": rng.uniform(0, 1, (2, 16, 16)), "m_off": rng.uniform(0, 1, (2, 16, 16))}
trace = {}
logits = model.forward(inputs, trace=trace)
print("logits", logits.shape, "gate mean %.3f, factor in [%.3f, %.3f]"
      % (trace["gate"].mean(), trace["factor"].min(), trace["factor"].max()))

print("SCNN trace at 224:")
for name, shape in REFERENCE_TRACE:
    print("  %-8s %s" % (name, "x".join(map(str, shape))))
