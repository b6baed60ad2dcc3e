int placeholder_test_mapping;
