int placeholder_test_odometry;
