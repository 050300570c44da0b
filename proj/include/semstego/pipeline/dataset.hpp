#pragma once

#include <string>
#include <vector>

#include "semstego/core/config.hpp"
#include "semstego/core/rng.hpp"
#include "semstego/core/tensor.hpp"

namespace semstego::pipeline {

// Procedural 6-class toy set standing in for a captioned photo collection.
const std::vector<std::string>& class_labels();

// Renders one jittered instance of `label` (size x size RGB).
ImageTensor render_class_image(const std::string& label, SeededRng& rng, std::size_t size);

struct Dataset {
  std::string id;
  std::vector<ImageTensor> train;
  std::vector<ImageTensor> validation;
  std::vector<ImageTensor> test;
};

enum class Split { train = 0, validation = 1, test = 2 };

// Item i of a split has class i mod 6 and draws from its own dataset stream.
ImageTensor dataset_image(Split split, std::size_t index, std::size_t size, std::uint64_t seed);
Dataset make_dataset(const DatasetSettings& settings, std::size_t image_size, std::uint64_t seed);

}  // namespace semstego::pipeline
