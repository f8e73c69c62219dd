// toy-saxpy baseline: single-precision a*x + y over 1M elements, verified on
// the host. Deliberately naive: two kernel passes and pageable staging.
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include <cuda_runtime.h>

#define CUDA_CHECK(call)                                                     \
  do {                                                                       \
    cudaError_t err__ = (call);                                              \
    if (err__ != cudaSuccess) {                                              \
      std::fprintf(stderr, "cuda error %s at %s:%d\n",                       \
                   cudaGetErrorString(err__), __FILE__, __LINE__);           \
      std::exit(1);                                                          \
    }                                                                        \
  } while (0)

__global__ void scale(int n, float a, const float* x, float* tmp) {
  int i = blockIdx.x * blockDim.x + threadIdx.x;
  if (i < n) tmp[i] = a * x[i];
}

__global__ void add(int n, const float* tmp, float* y) {
  int i = blockIdx.x * blockDim.x + threadIdx.x;
  if (i < n) y[i] = tmp[i] + y[i];
}

int main() {
  const int n = 1 << 20;
  const float a = 2.5f;
  float* hx = static_cast<float*>(std::malloc(n * sizeof(float)));
  float* hy = static_cast<float*>(std::malloc(n * sizeof(float)));
  for (int i = 0; i < n; ++i) {
    hx[i] = 1.0f + static_cast<float>(i % 7);
    hy[i] = 0.5f * static_cast<float>(i % 13);
  }

  float *dx, *dy, *dtmp;
  CUDA_CHECK(cudaMalloc(&dx, n * sizeof(float)));
  CUDA_CHECK(cudaMalloc(&dy, n * sizeof(float)));
  CUDA_CHECK(cudaMalloc(&dtmp, n * sizeof(float)));
  CUDA_CHECK(cudaMemcpy(dx, hx, n * sizeof(float), cudaMemcpyHostToDevice));
  CUDA_CHECK(cudaMemcpy(dy, hy, n * sizeof(float), cudaMemcpyHostToDevice));

  const int block = 256;
  const int grid = (n + block - 1) / block;
  for (int rep = 0; rep < 200; ++rep) {
    scale<<<grid, block>>>(n, a, dx, dtmp);
    add<<<grid, block>>>(n, dtmp, dy);
  }
  CUDA_CHECK(cudaDeviceSynchronize());
  CUDA_CHECK(cudaMemcpy(hy, dy, n * sizeof(float), cudaMemcpyDeviceToHost));

  // Every rep adds a*x to y, so the closed form stays checkable.
  double max_err = 0.0;
  for (int i = 0; i < n; ++i) {
    double want = 0.5 * (i % 13) + 200.0 * 2.5 * (1.0 + i % 7);
    max_err = std::fmax(max_err, std::fabs(hy[i] - want));
  }
  std::printf("saxpy n=%d reps=200 max_err=%.3e\n", n, max_err);

  CUDA_CHECK(cudaFree(dx));
  CUDA_CHECK(cudaFree(dy));
  CUDA_CHECK(cudaFree(dtmp));
  std::free(hx);
  std::free(hy);
  return max_err < 1e-3 ? 0 : 1;
}
