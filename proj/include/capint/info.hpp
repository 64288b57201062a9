#pragma once

#include <string_view>
#include <vector>

#include "capint/joint.hpp"
#include "capint/kernel.hpp"

namespace capint::prob {

// Shannon entropy -sum p log p in nats, with 0 log 0 = 0.
double entropy(const Dist& d);

// KL(p||q) in nats. Requires matching alphabets and absolute continuity
// (q(x)=0 implies p(x)=0); violations throw naming the offending atom.
double kl_divergence(const Dist& p, const Dist& q);

// I(A;B) = H(A) + H(B) - H(A,B), clamped to 0 from below.
double mutual_information(const JointTable& j, std::string_view a, std::string_view b);

// I(A_1..A_k ; B_1..B_l) with each side treated as one composite variable.
double mutual_information_grouped(const JointTable& j,
                                  std::span<const std::string_view> group_a,
                                  std::span<const std::string_view> group_b);

struct ConditionalMiResult {
  double value = 0.0;                 // sum_c P(c) I(A;B|C=c)
  std::vector<double> weights;        // P(C=c)
  std::vector<double> per_context;    // I(A;B|C=c); 0 for skipped contexts
  std::vector<std::size_t> skipped;   // zero-mass contexts, excluded from the sum
};

ConditionalMiResult conditional_mi(const JointTable& j, std::string_view a,
                                   std::string_view b, std::string_view given);

// I(in;out) of a source pushed through a kernel.
double mi_source_kernel(const Dist& src, const Kernel& k);

}  // namespace capint::prob
