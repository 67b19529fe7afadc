#include "fsv2v/training/losses.hpp"

namespace fsv2v::training {

using namespace nn;

template <typename T>
Var<T> lsgan_discriminator_loss(Var<T> real_logits, Var<T> fake_logits) {
  return add(mean_squared_to(real_logits, T(1)), mean_squared_to(fake_logits, T(0)));
}

template <typename T>
Var<T> lsgan_generator_loss(Var<T> fake_logits) {
  return mean_squared_to(fake_logits, T(1));
}

template <typename T>
Var<T> feature_matching_loss(Var<T> fake, Var<T> real, const std::vector<Var<T>>& fake_features,
                             const std::vector<Var<T>>& real_features) {
  if (fake_features.size() != real_features.size()) {
    throw ContractError("feature matching: " + std::to_string(fake_features.size()) + " fake vs " +
                        std::to_string(real_features.size()) + " real activations");
  }
  Var<T> loss = l1_distance(fake, real);
  if (fake_features.empty()) return loss;
  const T w = T(1) / static_cast<T>(fake_features.size());
  for (std::size_t i = 0; i < fake_features.size(); ++i)
    loss = add(loss, scale(l1_distance(fake_features[i], detach(real_features[i])), w));
  return loss;
}

template <typename T>
Var<T> flow_loss(Var<T> flow, Var<T> target) {
  return l1_distance(flow, target);
}

template <typename T>
Var<T> warp_loss(Var<T> previous, Var<T> flow, Var<T> current) {
  return l1_distance(bilinear_warp(previous, flow), current);
}

#define FSV2V_INSTANTIATE(T)                                                                               \
  template Var<T> lsgan_discriminator_loss(Var<T>, Var<T>);                                                \
  template Var<T> lsgan_generator_loss(Var<T>);                                                            \
  template Var<T> feature_matching_loss(Var<T>, Var<T>, const std::vector<Var<T>>&, const std::vector<Var<T>>&); \
  template Var<T> flow_loss(Var<T>, Var<T>);                                                               \
  template Var<T> warp_loss(Var<T>, Var<T>, Var<T>);

FSV2V_INSTANTIATE(float)
FSV2V_INSTANTIATE(double)

}  // namespace fsv2v::training
