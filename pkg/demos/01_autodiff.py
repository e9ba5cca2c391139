# Reverse-mode autodiff on float64 arrays, checked against central differences.

import numpy as np

from cgmm.numeric import Adam, Tensor, grad_check, log_softmax

rng = np.random.default_rng(0)

# A tiny graph: logistic-style loss on a linear map.
w = Tensor(rng.standard_normal((3, 2)), requires_grad=True)
x = Tensor(rng.standard_normal((5, 3)))
loss = -log_softmax(x @ w, axis=1)[np.arange(5), np.array([0, 1, 1, 0, 1])].mean()
loss.backward()
print("loss", loss.item())
print("dL/dw\n", w.grad)

# The same graph through the finite-difference checker.
rep = grad_check(lambda: -log_softmax(x @ w, axis=1)[np.arange(5), np.array([0, 1, 1, 0, 1])].mean(), {"w": w})
print(rep.summary())

# Adam on f(w) = w^2 from w = 1.
p = Tensor(np.array([1.0]), requires_grad=True)
opt = Adam({"p": p}, lr=0.1)
for step in range(5):
    opt.zero_grad()
    (p * p).sum().backward()
    opt.step()
    print(f"step {step}: w = {p.data[0]:.4f}")

# Every op in the package has a registered check; `cgmm gradcheck --module all` runs them.
from cgmm.gradsuite import format_report, timed_suite

results, secs = timed_suite("numeric", trials=25, tol=1e-4)
print(format_report(results, 1e-4, secs))
