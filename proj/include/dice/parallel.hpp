#pragma once
#include <cstddef>
#include <functional>

namespace dice {

void set_num_threads(int n);  // <= 0 means hardware concurrency
int num_threads();

// runs body(i) for i in [0,n); nested calls run inline
void parallel_for(size_t n, const std::function<void(size_t)>& body);

}  // namespace dice
