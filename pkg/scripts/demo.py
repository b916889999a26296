"""Solve the synthetic logistic SVM with every method and print a comparison."""
from qunac import Method, NewtonConfig, logistic_svm, minimize
from qunac.libsvm import synthetic_dataset
from qunac.problems import L2, PseudoHuber

data = synthetic_dataset()
for reg in (L2(), PseudoHuber(0.1)):
    print(f"\n{data.source}  regularizer={type(reg).__name__}")
    print(f"{'method':<16}{'stop':<12}{'f':>20}{'outer':>7}{'Hv':>7}{'secs':>8}")
    for method in Method:
        rep = minimize(logistic_svm(data, reg, 1.0), NewtonConfig(method=method, eps=1e-7))
        last = rep.trace[-1]
        print(f"{method.value:<16}{rep.stop_reason.value:<12}{rep.f:>20.12f}{rep.outer_iterations:>7}"
              f"{last.cum_hv:>7}{last.seconds:>8.3f}")
