int placeholder_test_bow;
