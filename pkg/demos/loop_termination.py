"""
A loop that SIEVE cannot certify
================================

Three actions cycle over one counter X: two lower it and one raises it.
Edge removal by monotone variables fails because X moves both ways inside the
cycle, but with unit steps every round lowers X by one.
"""

from bagplan import corpus, build_graph, sieve, solve, termination_test, simulate

p = corpus.loop_problem()
sol = solve(p)
graph = build_graph(p, sol.policy)

for src, a, dst in graph.edges:
    print(p.format_qstate(graph.nodes[src]), "--", p.ops[a].id, "->",
          p.format_qstate(graph.nodes[dst]))

acyclic, remaining, _ = sieve(graph)
print("edge removal alone leaves a cycle:", not acyclic)

verdict = termination_test(graph)
w = verdict.loops[0]
print(f"loop certificate: {p.var_id(w.var)} lowered {w.decs}x, raised {w.incs}x per round")

# concrete runs: X = 7 needs seven rounds, each a, b, c
run = simulate(p, sol.policy, (7, 1, 1))
print(run.verdict, "after", run.steps, "steps;", "X along the way:",
      [s[0] for s in run.trajectory])

# the original start state {X>0, A, !B} enables no action at all
print("from {X>0, A, !B}:", solve(corpus.loop_problem(init_b=False)).outcome.value)
