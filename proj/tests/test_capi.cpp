int placeholder_test_capi;
