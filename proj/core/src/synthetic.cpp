#include <string>

#include "sosr/data_io.hpp"
#include "sosr/error.hpp"
#include "sosr/vmf.hpp"

namespace sosr {

void SyntheticSpec::validate() const {
  if (classes < 2) throw Error(ErrorCode::kInvalidArgument, "synthetic spec needs at least 2 classes");
  if (samples_per_class < 2) throw Error(ErrorCode::kInvalidArgument, "synthetic spec needs >= 2 samples per class");
  if (q < 2) throw Error(ErrorCode::kInvalidArgument, "synthetic spec needs dimension >= 2");
  if (!(kappa_intra >= 0.0) || !(kappa_inter >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "synthetic spec kappas must be >= 0");
  }
}

LabeledDescriptorSet generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::vector<double> axis(spec.q, 0.0);
  axis[0] = 1.0;
  Rng center_rng = make_rng(spec.seed, 0);
  const auto centers = sample_vmf({UnitDescriptor::from_unit(axis), spec.kappa_inter}, spec.classes, center_rng);

  LabeledDescriptorSet set;
  set.descriptors = Matrix(spec.classes * spec.samples_per_class, spec.q);
  set.labels.reserve(spec.classes * spec.samples_per_class);
  std::size_t row = 0;
  for (std::size_t c = 0; c < spec.classes; ++c) {
    // Per-class stream so that class c does not depend on how many rejection
    // draws earlier classes needed.
    Rng rng = make_rng(spec.seed, 1 + c);
    for (const auto& x : sample_vmf({centers[c], spec.kappa_intra}, spec.samples_per_class, rng)) {
      std::copy(x.values().begin(), x.values().end(), set.descriptors.row(row++).begin());
      set.labels.push_back(static_cast<Label>(c));
    }
  }
  return set;
}

}  // namespace sosr
