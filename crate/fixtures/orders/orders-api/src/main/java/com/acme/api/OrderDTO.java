package com.acme.api;

/** Order payload received by the REST API. */
public class OrderDTO {
    private String id;
    private String customer;
    private int quantity;

    public String getId() {
        return id;
    }

    public String getCustomer() {
        return customer;
    }

    public int getQuantity() {
        return quantity;
    }
}
