"""Registry of check ids with the formula each one implements."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class CheckInfo:
    check_id: str
    anchor: str
    formula: str
    kind: str  # inequality | identity | diagnostic
    informational: bool = False


_ENTRIES = [
    CheckInfo("psi_factor_ode", "integrating factor of the gradient estimate",
              "psi(t) = (1 - exp(-2Kt))/(2K), psi(t) = t at K = 0; residual psi' + 2K psi - 1", "identity"),
    CheckInfo("psi_elementary_bound", "elementary bound used to relax the gradient estimate",
              "2K/(1 - exp(-2Kt)) <= 2K + 1/t", "inequality"),
    CheckInfo("flow_certificate", "curvature condition of the flow",
              "min eigenvalue of (LHS tensor - threshold*g) relative to g >= -tol over the grid", "diagnostic"),
    CheckInfo("bianchi_defect", "Ricci-flow case of the Li-Yau constant B",
              "B_const = max |S|_g, expected to vanish when h = -Ric and phi = 0", "diagnostic"),
    CheckInfo("hamilton_1_13", "gradient estimate under a (-K)-super Perelman flow, sharp coefficient",
              "|grad u|^2/u^2 <= 2K/(1 - exp(-2K tau)) * log(A/u)", "inequality"),
    CheckInfo("hamilton_1_14", "gradient estimate under a (-K)-super Perelman flow, relaxed coefficient",
              "|grad u|^2/u^2 <= (1/tau + 2K) * log(A/u)", "inequality"),
    CheckInfo("integrated_harnack", "two-point consequence of the gradient estimate",
              "log u(x,t) <= d/(1+d) log A + 1/(1+d) log u(y,t)"
              " + (1 + 1/d)/(4(1+d)) * 2K/(1 - exp(-2K tau)) * d_t(x,y)^2", "inequality"),
    CheckInfo("li_yau_compact", "Li-Yau bound on a compact manifold",
              "|grad f|^2 - alpha f_t <= (m alpha^2/4t)[1 + sqrt(1 + D t^2/m)],"
              " D = 4A^2 + m(2K+gamma)^2/(alpha-1)^2 + 2B^2/gamma", "inequality"),
    CheckInfo("li_yau_complete", "Li-Yau bound on a complete manifold",
              "|grad f|^2 - alpha f_t <= (m alpha^2/4t)[1 + E t + sqrt((1 + E t)^2 + D t^2/m)],"
              " E = C4 (K2 + sqrt K1)", "inequality"),
    CheckInfo("li_yau_local", "local Li-Yau bound on the ball d(x, o, t) <= 2R",
              "same form as li_yau_complete with E = C4 (K2 + sqrt K1) + C5/R + C6/R^2", "inequality"),
    CheckInfo("li_yau_sharpness", "equality case of the Li-Yau bound with alpha = 1 on flat space",
              "heat kernel: t(|grad f|^2 - f_t) = m/2; margin 1 - 2t(|grad f|^2 - f_t)/m, two-sided", "identity"),
    CheckInfo("static_reduction", "static reduction of the complete bound",
              "bound at the matching gamma = (m alpha^2/2t)[1 + C4 sqrt(K) t + K t/(alpha-1)]", "identity"),
    CheckInfo("parabolic_harnack", "parabolic Harnack inequality from the Li-Yau bound, lower-bound form",
              "u(x2,t2)/u(x1,t1) >= exp(-C7 (t2-t1)) (t1/t2)^(m alpha/2) exp(-C alpha d~(x1,x2)^2/(4(t2-t1))),"
              " C7 = (m alpha/2) E + (m alpha/4) sqrt(D/m)", "inequality"),
    CheckInfo("bochner", "weighted Bochner formula",
              "L|grad u|^2 - 2<grad u, grad Lu> = 2|Hess u|^2 + 2 Ric(L)(grad u, grad u)", "identity"),
    CheckInfo("gradient_rate", "time derivative of the squared gradient",
              "d/dt |grad f|^2 = -2h(grad f, grad f) + 2<grad f, grad f_t>", "identity"),
    CheckInfo("commutator", "commutator of d/dt and L",
              "[d/dt, L]f = -2<h, Hess f> + 2h(grad phi, grad f) - <2 div h - grad tr h + grad phi_t, grad f>",
              "identity"),
    CheckInfo("heat_equation", "precondition for the heat identities", "u_t - Lu = 0", "identity"),
    CheckInfo("evolution_identity", "evolution of |grad u|^2/u",
              "(d/dt - L)(|grad u|^2/u) = -(2/u)|Hess u - du (x) du/u|^2 - (2/u)(h + Ric(L))(grad u, grad u)",
              "identity"),
    CheckInfo("companion_identity", "evolution of u log(A/u)",
              "(d/dt - L)(u log(A/u)) = |grad u|^2/u", "identity"),
    CheckInfo("evolution_sign", "sign consequence on a certified flow",
              "(d/dt - L)(|grad u|^2/u) <= 2K |grad u|^2/u", "inequality"),
    CheckInfo("max_principle_function", "maximum-principle function of the gradient estimate",
              "H = psi(tau)|grad u|^2/u - u log(A/u) satisfies (d/dt - L)H <= 0", "inequality"),
    CheckInfo("li_yau_F_identity", "evolution of F = tau(|grad f|^2 - alpha f_t)",
              "(L - d/dt)F = 2tau(|Hess f|^2 + (Ric(L) + (1-alpha)h)(grad f, grad f))"
              " - 2<grad f, grad F> - F/tau + alpha tau [d/dt, L]f", "identity"),
    CheckInfo("li_yau_F_lower_bound", "pointwise lower bound for (L - d/dt)F",
              "(L - d/dt)F >= 2F^2/(alpha^2 m tau) + 4(alpha-1)|grad f|^2 F/(m alpha^2)"
              " + 2tau(alpha-1)^2|grad f|^4/(m alpha^2) - (tau alpha^2/2)[(tr h)^2/(m-n) + |h|^2]"
              " + 2tau(Ric_mn(L) + (1-alpha)h)(grad f, grad f) - 2<grad f, grad F> - F/tau + alpha tau S(grad f)",
              "inequality"),
    CheckInfo("li_yau_chain", "consolidated lower bound for (L - d/dt)F, at nodes with F >= 0",
              "(L - d/dt)F >= 2F^2/(alpha^2 m tau) - F/tau - 2<grad f, grad F> - tau alpha^2 A^2/2"
              " - m alpha^2 tau (2K+gamma)^2/(8(alpha-1)^2) - alpha^2 B^2 tau/(4 gamma)", "inequality"),
    CheckInfo("algebraic_lemma", "quartic lower bound used in the Li-Yau chain",
              "a x^4 + b x^2 + c x >= -(b-gamma)^2/(4a) - c^2/(4 gamma) for a, gamma > 0", "inequality"),
    CheckInfo("laplacian_comparison", "Laplacian comparison for the distance function",
              "L rho <= (m-1) sqrt(K1) coth(sqrt(K1) rho) away from o and the cut locus", "inequality"),
    CheckInfo("laplacian_comparison_rho_form", "variant of the comparison with an extra factor rho",
              "L rho <= (m-1) sqrt(K1) rho coth(sqrt(K1) rho)", "inequality", informational=True),
    CheckInfo("cutoff_inequality", "cutoff inequality used for localisation",
              "(L - d/dt)psi >= -C1 K2 sqrt(psi) - (C1/R)(m-1) sqrt(K1) coth(sqrt(K1) rho) - C2/R^2,"
              " psi = eta(rho/R)", "inequality"),
    CheckInfo("cutoff_profile", "properties of the cutoff profile eta",
              "eta = 1 on [0,1], 0 on [2,inf), 0 <= eta <= 1, eta' <= 0, |eta'|^2 <= C1 eta, eta'' >= -C2",
              "diagnostic"),
    CheckInfo("mass_conservation", "weighted mass under the compensated potential",
              "relative drift of sum rho V u per step, with phi_t = tr_g h", "diagnostic"),
    CheckInfo("growth_condition", "integrability hypothesis on complete manifolds (spot check only)",
              "discrete integral of (|grad(|grad u|^2/u)|^2 + |grad(u log u)|^2) p dV dt is finite",
              "diagnostic", informational=True),
    CheckInfo("feynman_kac", "Feynman-Kac representation",
              "u(x,T) = E[u0(X_T^x)] within 3 stderr + time-step allowance", "identity"),
    CheckInfo("martingale_inequality", "supermartingale argument behind the gradient estimate",
              "E[H(X_s, T - s)] is non-decreasing in s, within 3 stderr + allowance", "inequality"),
    CheckInfo("generator_consistency", "generator of the simulated diffusion",
              "short-time (E[v(X_s)] - v(x))/s -> Lv(x)", "identity"),
]

CATALOG = {e.check_id: e for e in _ENTRIES}


def describe(check_id):
    """Text block for ``check_id``; raises ``KeyError`` for unknown ids."""
    e = CATALOG[check_id]
    tag = " (informational)" if e.informational else ""
    return f"{e.check_id} [{e.kind}{tag}]\n  anchor:  {e.anchor}\n  formula: {e.formula}"
