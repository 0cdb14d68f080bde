#pragma once

#include <string>
#include <vector>

#include "memento/instance.hpp"

namespace memento {

// Binary container for a generated dataset; load(save(d)) reproduces every
// field bit for bit.
void save_dataset(const std::string& path, const Dataset& data);
Dataset load_dataset(const std::string& path);

// Reference costs as text, one value per line in instance order. %.17g keeps
// doubles exact through the round trip.
void save_costs(const std::string& path, const std::vector<double>& costs);
std::vector<double> load_costs(const std::string& path);

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace memento
