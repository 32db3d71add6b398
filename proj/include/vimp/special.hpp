#pragma once

namespace vimp {

double normal_cdf(double x);

// Inverse of normal_cdf on (0, 1); absolute error well below 1e-9.
double normal_quantile(double p);

// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double incomplete_beta(double a, double b, double x);

// P(T <= t) for Student's t with df degrees of freedom.
double student_t_cdf(double t, double df);

}  // namespace vimp
