#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fsv2v/model/config.hpp"
#include "fsv2v/nn/params.hpp"

namespace fsv2v::model {

// Every parameter of one variant: generator (E.*, H.*), flow and occlusion
// (W.*, M.*) and discriminators (D.*).
std::vector<nn::ParamSpec> declare_model(const ModelConfig& cfg);

nn::ParamSet<float> initialize_model(const ModelConfig& cfg, std::uint64_t seed);

bool is_discriminator_param(const std::string& name);
bool is_generator_param(const std::string& name);
// E.* and H.*: what example fine-tuning may touch.
bool is_finetune_param(const std::string& name);

}  // namespace fsv2v::model
