int placeholder_test_bench_io;
