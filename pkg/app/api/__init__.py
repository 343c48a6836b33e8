#api package init
