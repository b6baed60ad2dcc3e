int placeholder_test_raster;
