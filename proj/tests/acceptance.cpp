int placeholder_acceptance;
