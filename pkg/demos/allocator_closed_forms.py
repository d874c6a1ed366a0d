"""Closed-form resource shares for one offloading decision, checked against the grid oracle."""
from satoffload.allocator import OffloadMatrix, Weights, allocate_all, cns_power, verify_allocator
from satoffload.harness.config import toy_scenario
from satoffload.model import generate_scenario

sc = generate_scenario(toy_scenario(), 11)
lms = next(s.id for s in sc.satellites if s.layer.value == "LMS")
cns = next(s.id for s in sc.satellites if s.layer.value == "CNS")

# three sub-tasks share the LMS, one goes to the CNS
m = OffloadMatrix((0, 1, 2, 3), (lms, lms, lms, cns))
res = allocate_all(sc, m, Weights(0.5, 0.5), check=False)
for i, sid in enumerate(m.subtask_ids):
    st = sc.subtasks[sid]
    print(f"sub-task {sid}: {st.memory_mb:5.1f} MB {st.compute_gigacycles:5.1f} Gc -> server {m.servers[i]}  "
          f"y={res.y[i]:.3f} beta={res.beta[i]:.3f} omega={res.omega_cns[i]:.3f}  "
          f"T={res.t_ser[i]:.3f} s P={res.p_ser[i]:.3f}")
print(f"weighted objective {res.objective:.4f}")
print(f"CNS power for nu=40, chi=10, alpha=0.5/0.5: {cns_power(40.0, 0.5, 0.5, 10.0)}")

recs = verify_allocator(n_instances=20)
print(f"grid oracle: {sum(r.passed for r in recs)}/{len(recs)} instances pass")
