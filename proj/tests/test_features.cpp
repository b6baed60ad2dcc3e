int placeholder_test_features;
