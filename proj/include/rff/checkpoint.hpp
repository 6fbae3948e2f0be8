#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "rff/gen.hpp"
#include "rff/mapper.hpp"

namespace rff {

// Text checkpoint: a header (kind, seed, config hash, free-form metadata)
// followed by named tensors written in base 10 with enough digits to
// round-trip every 32-bit float.
struct Checkpoint {
  std::string kind;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::map<std::string, std::string> meta;
  std::map<std::string, Tensor> tensors;

  const Tensor& tensor(const std::string& name) const;  // LoadError if absent
  const std::string& get_meta(const std::string& key) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies every parameter into / out of the tensor map under `prefix` + name.
void store_params(Checkpoint& ckpt, const ParamList<float>& params, const std::string& prefix = "");
// Shapes must match exactly; a mismatch is a LoadError naming the tensor.
void restore_params(const Checkpoint& ckpt, const ParamList<float>& params,
                    const std::string& prefix = "");

void store_mapper(Checkpoint& ckpt, Mapper& m);
Mapper restore_mapper(const Checkpoint& ckpt);

void store_gen_model(Checkpoint& ckpt, GenModel& m);
GenModel restore_gen_model(const Checkpoint& ckpt);

}  // namespace rff
